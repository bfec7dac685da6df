// Context editor plus the personalized ranked-tweet panel. Relevance
// judgments made here accumulate into an exportable training file
// (message_id,context_id,relevance) for the ranker.

import { ApiClient } from "./api.js";
import type { RankedPanel, RankedTweet } from "./types.js";

export interface ContextJudgment {
  messageId: string;
  contextId: string;
  relevance: 0 | 1;
}

export class JudgmentExport {
  private rows = new Map<string, ContextJudgment>();

  record(judgment: ContextJudgment): void {
    this.rows.set(`${judgment.contextId}:${judgment.messageId}`, judgment);
  }

  toCsv(): string {
    const lines = ["message_id,context_id,relevance"];
    for (const j of this.rows.values()) {
      lines.push(`${j.messageId},${j.contextId},${j.relevance}`);
    }
    return lines.join("\n") + "\n";
  }

  get size(): number {
    return this.rows.size;
  }
}

const FEATURE_BADGES: Array<[keyof RankedTweet["features"], string]> = [
  ["mc", "MC"],
  ["loc", "L"],
  ["hashtag", "#"],
  ["cc", "CC"],
  ["url", "URL"],
];

export function renderRankedPanel(
  root: HTMLElement,
  panel: RankedPanel,
  contextId: string,
  exporter: JudgmentExport,
): void {
  root.replaceChildren();
  const heading = document.createElement("h3");
  heading.textContent = `Ranked messages for alert ${panel.alert_id}`;
  root.append(heading);

  const expansion = document.createElement("p");
  expansion.className = "muted";
  const terms = [
    ...panel.expansion.extra_conditions,
    ...panel.expansion.extra_locations,
    ...panel.expansion.complementary_terms,
    ...panel.expansion.hashtags.map((h) => `#${h}`),
  ];
  expansion.textContent = terms.length
    ? `expanded context: ${terms.join(", ")}`
    : "no expansion terms";
  root.append(expansion);

  if (panel.tweets.length === 0) {
    const empty = document.createElement("p");
    empty.className = "empty-state";
    empty.textContent = "No candidate messages in this context window.";
    root.append(empty);
    return;
  }

  const list = document.createElement("ol");
  for (const tweet of panel.tweets) {
    const item = document.createElement("li");
    const text = document.createElement("span");
    text.textContent = tweet.text;
    item.append(text);
    for (const [key, label] of FEATURE_BADGES) {
      if (tweet.features[key]) {
        const badge = document.createElement("span");
        badge.className = "badge";
        badge.textContent = label;
        item.append(badge);
      }
    }
    const mark = (relevance: 0 | 1, title: string) => {
      const btn = document.createElement("button");
      btn.type = "button";
      btn.textContent = title;
      btn.addEventListener("click", () => {
        exporter.record({ messageId: tweet.message_id, contextId, relevance });
        item.classList.remove("marked-relevant", "marked-irrelevant");
        item.classList.add(relevance ? "marked-relevant" : "marked-irrelevant");
      });
      return btn;
    };
    item.append(mark(1, "relevant"), mark(0, "irrelevant"));
    list.append(item);
  }
  root.append(list);
}

export async function loadRankedPanel(
  api: ApiClient,
  alertId: number,
  contextId: string | null,
  n: number,
): Promise<RankedPanel> {
  return api.alertTweets(alertId, contextId, n);
}
