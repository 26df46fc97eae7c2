// Wire types for the websteer service. These mirror the JSON the service
// actually sends; the service's /config payload is the source of truth for
// the configurable parts.

export type EventKind =
  | "plan_generated"
  | "replanned"
  | "action_generated"
  | "action_grounded"
  | "action_executed"
  | "search_progress"
  | "done"
  | "error";

export interface ServiceEvent {
  seq: number;
  kind: EventKind;
  data: Record<string, unknown>;
}

export interface SessionInfo {
  session_id: string;
  status: "idle" | "running";
  last_seq: number;
  live_view_url: string | null;
}

export interface TreeNodeRow {
  id: number;
  parent: number | null;
  action: string | null;
  depth: number;
  visits: number;
  total_value: number;
  q: number;
  value: number | null;
  executed: boolean;
  invalid: boolean;
  terminal: boolean;
  url: string;
}

export interface TreeExport {
  root: number;
  nodes: TreeNodeRow[];
  best_path: number[];
}

export interface SearchDefaults {
  strategy: string;
  branching_k: number;
  max_depth: number;
  iterations: number;
  exploration_c: number;
  sample_temperature: number | null;
  value_threshold: number;
}

export interface UiConfig {
  service: string;
  version: string;
  browser: {
    mode: string;
    endpoint: string | null;
    viewport: number[];
    headless: boolean;
  };
  defaults: {
    agent_kind: string;
    max_steps: number;
    replan_every: number;
    memory_enabled: boolean;
    features: string[];
    search: SearchDefaults;
  };
  agent_kinds: string[];
  search_strategies: string[];
  observation_features: string[];
  event_kinds: string[];
}

export interface InstructionBody {
  goal: { text: string; starting_url: string };
  plan?: string;
  mode?: "episode" | "search";
  agent_kind?: string;
  max_steps?: number;
  replan_every?: number;
  memory_enabled?: boolean;
  features?: string[];
  search?: Partial<SearchDefaults>;
}

export interface InstructionAccepted {
  instruction_id: string;
  from_seq: number;
}
