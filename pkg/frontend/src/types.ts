// Payload shapes of the epistream service API.

export interface AlertRecord {
  alert_id: number;
  disease: string;
  country: string;
  date: string;
  algorithm: string;
  params: string;
  statistic: number | null;
  threshold: number | null;
  observed: number;
}

export type FacetField = "disease" | "country" | "algorithm";

export interface AlertPage {
  alerts: AlertRecord[];
  facets: Record<FacetField, Record<string, number>>;
  total: number;
  page: number;
  pages: number;
}

export interface QueueTask {
  task_id: string;
  message_id: string;
  text: string;
  required: number;
  judgments: number;
}

export interface QueuePage {
  tasks: QueueTask[];
  open_total: number;
  resolved_total: number;
  guideline: string;
}

export interface JudgmentResult {
  task_id: string;
  status: "open" | "resolved" | "discarded";
  resolved_label: string | null;
  judgments: number;
}

export interface RankedTweet {
  message_id: string;
  score: number;
  text: string;
  features: { mc: boolean; loc: boolean; hashtag: boolean; cc: boolean; url: boolean };
}

export interface RankedPanel {
  alert_id: number;
  context: string | null;
  expansion: {
    extra_conditions: string[];
    extra_locations: string[];
    complementary_terms: string[];
    hashtags: string[];
  };
  tweets: RankedTweet[];
}

export interface ContextRecord {
  context_id: string;
  start: string;
  end: string;
  conditions: string[];
  locations: string[];
}

export interface HealthInfo {
  status: string;
  model_version: string | null;
  messages: number;
  alerts: number;
  open_tasks: number;
}
