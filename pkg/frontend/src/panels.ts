// Panel renderers: one DOM panel per payload in the bundle, arranged in
// the canonical component order. Panels render payloads verbatim; hidden
// components produce no elements at all. Every interaction the study
// cares about emits exactly one telemetry event.

import { renderMarkdown } from "./markdown.js";
import type { TelemetryQueue } from "./telemetry.js";
import type {
  Bundle,
  GraphPayload,
  HierarchyNode,
  HierarchyPayload,
  Payload,
  RadarPayload,
  TagsPayload,
  TextualPayload,
  VennPayload,
} from "./types.js";

export const PANEL_ORDER = ["textual", "tags", "hierarchy", "graph", "radar", "venn"] as const;

const PANEL_TITLES: Record<string, string> = {
  textual: "Why this recommendation",
  tags: "Tags",
  hierarchy: "Course structure",
  graph: "Topic relations",
  radar: "At a glance",
  venn: "Overlaps",
};

function panelShell(kind: string): HTMLElement {
  const panel = document.createElement("section");
  panel.className = "panel";
  panel.dataset.kind = kind;
  const heading = document.createElement("h2");
  heading.textContent = PANEL_TITLES[kind] ?? kind;
  panel.appendChild(heading);
  return panel;
}

function renderTextual(payload: TextualPayload): HTMLElement {
  const panel = panelShell("textual");
  const body = document.createElement("div");
  body.className = "textual-body";
  body.innerHTML = renderMarkdown(payload.body);
  panel.appendChild(body);
  return panel;
}

function renderTags(payload: TagsPayload, telemetry: TelemetryQueue): HTMLElement {
  const panel = panelShell("tags");
  const list = document.createElement("div");
  list.className = "tag-list";
  for (const entry of payload.entries) {
    const tag = document.createElement("a");
    tag.className = "tag";
    tag.textContent = entry.label;
    if (entry.hyperlink) {
      tag.href = entry.hyperlink;
      tag.target = "_blank";
      tag.rel = "noopener";
    }
    tag.addEventListener("click", () => {
      telemetry.emit("click", "tags", `tag:${entry.label}`);
    });
    list.appendChild(tag);
  }
  panel.appendChild(list);
  return panel;
}

function renderHierarchyNode(node: HierarchyNode, telemetry: TelemetryQueue): HTMLElement {
  const item = document.createElement("li");
  item.dataset.nodeId = node.node_id;
  item.dataset.expanded = String(node.expanded);
  if (node.recommended) {
    item.classList.add("recommended");
  }

  const row = document.createElement("div");
  row.className = "node-row";

  if (node.children.length > 0) {
    const toggle = document.createElement("button");
    toggle.className = "toggle";
    toggle.textContent = node.expanded ? "−" : "+";
    toggle.addEventListener("click", () => {
      const expanded = item.dataset.expanded === "true";
      item.dataset.expanded = String(!expanded);
      toggle.textContent = expanded ? "+" : "−";
      const sublist = item.querySelector(":scope > ul");
      if (sublist instanceof HTMLElement) {
        sublist.hidden = expanded;
      }
      telemetry.emit(expanded ? "collapse" : "expand", "hierarchy", `node:${node.node_id}`);
    });
    row.appendChild(toggle);
  }

  const title = node.hyperlink ? document.createElement("a") : document.createElement("span");
  title.className = "node-title";
  title.textContent = node.title;
  if (title instanceof HTMLAnchorElement) {
    title.href = node.hyperlink;
    title.target = "_blank";
    title.rel = "noopener";
    title.addEventListener("click", () => {
      telemetry.emit("click", "hierarchy", `title:${node.node_id}`);
    });
  }
  row.appendChild(title);
  item.appendChild(row);

  if (node.children.length > 0) {
    const sublist = document.createElement("ul");
    sublist.hidden = !node.expanded;
    for (const child of node.children) {
      sublist.appendChild(renderHierarchyNode(child, telemetry));
    }
    item.appendChild(sublist);
  }
  return item;
}

function renderHierarchy(payload: HierarchyPayload, telemetry: TelemetryQueue): HTMLElement {
  const panel = panelShell("hierarchy");
  const tree = document.createElement("ul");
  tree.className = "hierarchy";
  tree.appendChild(renderHierarchyNode(payload.root, telemetry));
  panel.appendChild(tree);
  return panel;
}

function renderGraph(payload: GraphPayload, telemetry: TelemetryQueue): HTMLElement {
  // Nodes on a circle with labeled edges; enough to show relations and
  // their textual labels without a charting dependency.
  const panel = panelShell("graph");
  const size = 360;
  const radius = 130;
  const svgNs = "http://www.w3.org/2000/svg";
  const svg = document.createElementNS(svgNs, "svg");
  svg.setAttribute("viewBox", `0 0 ${size} ${size}`);
  svg.setAttribute("class", "graph");

  const positions = new Map<string, { x: number; y: number }>();
  payload.nodes.forEach((node, i) => {
    const angle = (2 * Math.PI * i) / payload.nodes.length - Math.PI / 2;
    positions.set(node.topic_id, {
      x: size / 2 + radius * Math.cos(angle),
      y: size / 2 + radius * Math.sin(angle),
    });
  });

  for (const edge of payload.edges) {
    const from = positions.get(edge.from);
    const to = positions.get(edge.to);
    if (!from || !to) continue;
    const line = document.createElementNS(svgNs, "line");
    line.setAttribute("x1", String(from.x));
    line.setAttribute("y1", String(from.y));
    line.setAttribute("x2", String(to.x));
    line.setAttribute("y2", String(to.y));
    line.setAttribute("class", "edge");
    svg.appendChild(line);
    const label = document.createElementNS(svgNs, "text");
    label.setAttribute("x", String((from.x + to.x) / 2));
    label.setAttribute("y", String((from.y + to.y) / 2 - 4));
    label.setAttribute("class", "edge-label");
    label.textContent = edge.label;
    svg.appendChild(label);
  }

  for (const node of payload.nodes) {
    const pos = positions.get(node.topic_id)!;
    const group = document.createElementNS(svgNs, "g");
    group.setAttribute("class", node.recommended ? "node recommended" : "node");
    group.addEventListener("click", () => {
      telemetry.emit("click", "graph", `node:${node.topic_id}`);
    });
    const circle = document.createElementNS(svgNs, "circle");
    circle.setAttribute("cx", String(pos.x));
    circle.setAttribute("cy", String(pos.y));
    circle.setAttribute("r", "16");
    group.appendChild(circle);
    const text = document.createElementNS(svgNs, "text");
    text.setAttribute("x", String(pos.x));
    text.setAttribute("y", String(pos.y + 28));
    text.setAttribute("text-anchor", "middle");
    text.textContent = node.label;
    group.appendChild(text);
    svg.appendChild(group);
  }
  panel.appendChild(svg);
  return panel;
}

function renderRadar(payload: RadarPayload): HTMLElement {
  const panel = panelShell("radar");
  const size = 280;
  const radius = 100;
  const center = size / 2;
  const svgNs = "http://www.w3.org/2000/svg";
  const svg = document.createElementNS(svgNs, "svg");
  svg.setAttribute("viewBox", `0 0 ${size} ${size}`);
  svg.setAttribute("class", "radar");

  const angleOf = (i: number) => (2 * Math.PI * i) / payload.axes.length - Math.PI / 2;
  const pointAt = (i: number, value: number) => ({
    x: center + radius * value * Math.cos(angleOf(i)),
    y: center + radius * value * Math.sin(angleOf(i)),
  });

  for (let i = 0; i < payload.axes.length; i++) {
    const end = pointAt(i, 1);
    const spoke = document.createElementNS(svgNs, "line");
    spoke.setAttribute("x1", String(center));
    spoke.setAttribute("y1", String(center));
    spoke.setAttribute("x2", String(end.x));
    spoke.setAttribute("y2", String(end.y));
    spoke.setAttribute("class", "spoke");
    svg.appendChild(spoke);
    const label = document.createElementNS(svgNs, "text");
    const anchor = pointAt(i, 1.18);
    label.setAttribute("x", String(anchor.x));
    label.setAttribute("y", String(anchor.y));
    label.setAttribute("text-anchor", "middle");
    label.setAttribute("class", "axis-label");
    label.textContent = `${payload.axes[i].name} (${payload.axes[i].value.toFixed(2)})`;
    svg.appendChild(label);
  }

  const polygon = document.createElementNS(svgNs, "polygon");
  polygon.setAttribute(
    "points",
    payload.axes.map((axis, i) => {
      const p = pointAt(i, Math.max(0, Math.min(1, axis.value)));
      return `${p.x},${p.y}`;
    }).join(" "),
  );
  polygon.setAttribute("class", "radar-area");
  svg.appendChild(polygon);
  panel.appendChild(svg);
  return panel;
}

function renderVenn(payload: VennPayload, telemetry: TelemetryQueue): HTMLElement {
  const panel = panelShell("venn");
  const overlay = document.createElement("div");
  overlay.className = "venn-overlay";
  overlay.textContent = "";

  const regions = document.createElement("ul");
  regions.className = "venn-regions";
  const names = payload.sets.map((s) => s.name);
  for (const region of payload.regions) {
    const item = document.createElement("li");
    item.dataset.mask = region.membership_mask;
    const parts = names.filter((_, i) => region.membership_mask[i] === "1");
    item.textContent = parts.join(" ∩ ");
    item.addEventListener("mouseenter", () => {
      overlay.textContent = region.overlay;
      telemetry.emit("hover", "venn", `region:${region.membership_mask}`);
    });
    item.addEventListener("click", () => {
      overlay.textContent = region.members.length
        ? `${region.overlay}: ${region.members.join(", ")}`
        : region.overlay;
      telemetry.emit("click", "venn", `region:${region.membership_mask}`);
    });
    regions.appendChild(item);
  }
  panel.appendChild(regions);
  panel.appendChild(overlay);
  return panel;
}

export function renderBundle(
  container: HTMLElement,
  bundle: Bundle,
  telemetry: TelemetryQueue,
): void {
  container.replaceChildren();
  const seen = new Set(Object.keys(bundle.payloads));
  for (const kind of PANEL_ORDER) {
    const payload = bundle.payloads[kind] as Payload | undefined;
    if (!payload) continue;
    seen.delete(kind);
    switch (payload.kind) {
      case "textual":
        container.appendChild(renderTextual(payload));
        break;
      case "tags":
        container.appendChild(renderTags(payload, telemetry));
        break;
      case "hierarchy":
        container.appendChild(renderHierarchy(payload, telemetry));
        break;
      case "graph":
        container.appendChild(renderGraph(payload, telemetry));
        break;
      case "radar":
        container.appendChild(renderRadar(payload));
        break;
      case "venn":
        container.appendChild(renderVenn(payload, telemetry));
        break;
    }
  }
  // forward compatibility: a payload kind this build does not know is skipped
  for (const unknown of seen) {
    console.warn(`ignoring unknown payload kind: ${unknown}`);
  }
}
