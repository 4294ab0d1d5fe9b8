// Wire types mirroring the service's JSON contracts. The UI renders these
// verbatim and computes nothing itself.

export type ComponentKind =
  | "textual"
  | "tags"
  | "hierarchy"
  | "graph"
  | "radar"
  | "venn"
  | "chatbot";

export interface TextualPayload {
  kind: "textual";
  version: number;
  body: string;
}

export interface TagEntry {
  label: string;
  hyperlink: string;
}

export interface TagsPayload {
  kind: "tags";
  version: number;
  entries: TagEntry[];
}

export interface HierarchyNode {
  node_id: string;
  title: string;
  hyperlink: string;
  recommended: boolean;
  expanded: boolean;
  children: HierarchyNode[];
}

export interface HierarchyPayload {
  kind: "hierarchy";
  version: number;
  root: HierarchyNode;
}

export interface GraphNode {
  topic_id: string;
  label: string;
  recommended: boolean;
}

export interface GraphEdge {
  from: string;
  to: string;
  kind: string;
  weight: number;
  label: string;
}

export interface GraphPayload {
  kind: "graph";
  version: number;
  nodes: GraphNode[];
  edges: GraphEdge[];
}

export interface RadarAxis {
  name: string;
  value: number;
}

export interface RadarPayload {
  kind: "radar";
  version: number;
  axes: RadarAxis[];
}

export interface VennSet {
  name: string;
  members: string[];
}

export interface VennRegion {
  membership_mask: string;
  members: string[];
  count: number;
  overlay: string;
}

export interface VennPayload {
  kind: "venn";
  version: number;
  sets: VennSet[];
  regions: VennRegion[];
}

export type Payload =
  | TextualPayload
  | TagsPayload
  | HierarchyPayload
  | GraphPayload
  | RadarPayload
  | VennPayload;

export interface Bundle {
  condition_id: string;
  payloads: Record<string, Payload>;
  chatbot_visible: boolean;
}

export interface ChatMessage {
  seq: number;
  sender: string;
  recipients: string[];
  content: string;
  grounding_refs: string[];
  created_at: string;
}

export interface SessionInfo {
  session_id: string;
  condition_id: string;
  participants: { participant_id: string; kind: string }[];
  next_seq: number;
}

export type EventKind =
  | "click"
  | "hover"
  | "expand"
  | "collapse"
  | "chat_turn"
  | "component_view";

export interface TelemetryEvent {
  kind: EventKind;
  target: { component: ComponentKind; element: string };
  occurred_at: string;
}
