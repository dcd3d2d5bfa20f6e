/** Wire payload types, mirrored from the API. The client never invents
 * state: everything rendered derives from these. */

export type ExperimentStatus =
  | "Accepted"
  | "Queued"
  | "Running"
  | "Succeeded"
  | "Failed"
  | "Killed";

export const TERMINAL_STATUSES: ReadonlySet<ExperimentStatus> = new Set([
  "Succeeded",
  "Failed",
  "Killed",
]);

export interface ExperimentSummary {
  id: string;
  name: string;
  namespace: string;
  status: ExperimentStatus;
  created_at: number;
}

export interface EventWire {
  timestamp: number;
  seq: number;
  kind: string;
  detail: string;
  late: boolean;
}

export interface MetricWire {
  key: string;
  value: number;
  step: number;
  timestamp: number;
  late: boolean;
}

export interface TaskSpecWire {
  replicas: number;
  resources: string;
  launch_cmd_override?: string;
}

export interface SpecWire {
  meta: { name: string; namespace: string; framework: string; cmd: string };
  spec: Record<string, TaskSpecWire>;
  environment: { name?: string; image?: string };
  conf?: Record<string, string>;
}

export interface ExperimentRecord {
  id: string;
  spec: SpecWire;
  resolved_image: string;
  status: ExperimentStatus;
  template: { name: string; params: Record<string, string> } | null;
  created_at: number;
  finished_at: number | null;
  events: EventWire[];
  metrics: MetricWire[];
  logs: Record<string, { line: string; late: boolean }[]>;
  placement: Record<string, string> | null;
  artifact_uris: string[];
}

export interface TemplateParameterWire {
  name: string;
  value?: string | number | boolean;
  required: boolean;
}

export interface TemplateWire {
  name: string;
  author: string;
  description: string;
  parameters: TemplateParameterWire[];
  experimentSpec: unknown;
}

export interface NodeWire {
  node_id: string;
  capacity: string;
  allocated: string;
  running_tasks: string[];
}

export interface ClusterSnapshot {
  clock_ms: number;
  nodes: NodeWire[];
  wait_queue: string[];
}

export interface ApiErrorBody {
  code: string;
  message: string;
  details?: unknown;
}
