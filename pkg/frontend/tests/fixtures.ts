// Payload fixtures mirroring the service's wire format byte-for-byte
// (shapes copied from a live /api/bundle response).

import type { Bundle, Payload } from "../src/types.js";

export const PAYLOADS: Record<string, Payload> = {
  textual: {
    kind: "textual",
    version: 1,
    body: [
      "### Why these materials for **Algebra Basics**",
      "",
      "This recommendation contains **3 topics**:",
      "",
      "1. **Linear Equations**",
      "2. **Quadratic Functions**",
      "3. **Polynomials**",
      "",
      "- Goal coverage: 3 of the 4 topics required by *Algebra Basics* are included.",
      "- Interest overlap: 1 of the recommended topics match your interests.",
      "- Already completed: 1 of the recommended topics are in your completed list.",
    ].join("\n"),
  },
  tags: {
    kind: "tags",
    version: 1,
    entries: [
      { label: "algebra", hyperlink: "https://course.example/linear" },
      { label: "equations", hyperlink: "https://course.example/linear" },
      { label: "functions", hyperlink: "https://course.example/quadratic" },
    ],
  },
  hierarchy: {
    kind: "hierarchy",
    version: 1,
    root: {
      node_id: "n-root",
      title: "Algebra Course",
      hyperlink: "",
      recommended: false,
      expanded: true,
      children: [
        {
          node_id: "n-1",
          title: "Equations",
          hyperlink: "",
          recommended: false,
          expanded: true,
          children: [
            {
              node_id: "n-1a",
              title: "Linear Equations",
              hyperlink: "https://course.example/linear",
              recommended: true,
              expanded: false,
              children: [],
            },
            {
              node_id: "n-1b",
              title: "Quadratic Functions",
              hyperlink: "",
              recommended: true,
              expanded: false,
              children: [],
            },
          ],
        },
        {
          node_id: "n-2",
          title: "Expressions",
          hyperlink: "",
          recommended: false,
          expanded: false,
          children: [
            {
              node_id: "n-2a",
              title: "Polynomials",
              hyperlink: "",
              recommended: false,
              expanded: false,
              children: [],
            },
          ],
        },
      ],
    },
  },
  graph: {
    kind: "graph",
    version: 1,
    nodes: [
      { topic_id: "a", label: "Linear Equations", recommended: true },
      { topic_id: "b", label: "Quadratic Functions", recommended: true },
      { topic_id: "d", label: "Factoring", recommended: false },
    ],
    edges: [
      { from: "a", to: "b", kind: "similarity", weight: 0.9, label: "similarity (0.90)" },
      { from: "b", to: "d", kind: "part_of", weight: 0.7, label: "part_of (0.70)" },
    ],
  },
  radar: {
    kind: "radar",
    version: 1,
    axes: [
      { name: "goal_coverage", value: 0.75 },
      { name: "profile_overlap", value: 0.3333333333333333 },
      { name: "novelty", value: 0.6666666666666667 },
      { name: "tag_diversity", value: 0.6 },
      { name: "structure_adherence", value: 1.0 },
    ],
  },
  venn: {
    kind: "venn",
    version: 1,
    sets: [
      { name: "Recommended", members: ["a", "b", "c"] },
      { name: "Goal", members: ["a", "b", "c", "d"] },
      { name: "Interests", members: ["b", "e"] },
    ],
    regions: [
      { membership_mask: "001", members: ["e"], count: 1, overlay: "1 topics" },
      { membership_mask: "010", members: ["d"], count: 1, overlay: "1 topics" },
      { membership_mask: "011", members: [], count: 0, overlay: "0 topics" },
      { membership_mask: "100", members: [], count: 0, overlay: "0 topics" },
      { membership_mask: "101", members: [], count: 0, overlay: "0 topics" },
      { membership_mask: "110", members: ["a", "c"], count: 2, overlay: "2 topics" },
      { membership_mask: "111", members: ["b"], count: 1, overlay: "1 topics" },
    ],
  },
};

export function bundleWith(kinds: string[], chatbotVisible = false): Bundle {
  const payloads: Record<string, Payload> = {};
  for (const kind of kinds) {
    payloads[kind] = PAYLOADS[kind];
  }
  return { condition_id: "cond-test", payloads, chatbot_visible: chatbotVisible };
}

export const ALL_PANEL_KINDS = ["textual", "tags", "hierarchy", "graph", "radar", "venn"];
