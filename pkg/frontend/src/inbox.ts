/**
 * Task-inbox submission logic.
 *
 * Human listeners (meetings, approval decisions, guard pauses) take exactly
 * one human-decision signal. Tag waits that preview a downstream decision
 * are answered by tagging the bound subject: "yes" adds the decision's
 * positive tag before the awaited completion tags, "no" adds only the
 * completion tags. A per-task in-flight guard blocks double submits.
 */

import { Client, TaskItem } from "./api.js";

const inflight = new Set<string>();

export function taskKey(task: TaskItem): string {
  return `${task.run_id}:${task.node_id}`;
}

export function isSubmitting(task: TaskItem): boolean {
  return inflight.has(taskKey(task));
}

export interface Submission {
  kind: "human-decision" | "tag-added";
  posts: { tag?: string; choice?: string }[];
}

export function planSubmission(task: TaskItem, choice: string): Submission {
  if (task.await_tags !== undefined && task.resource) {
    const tags: string[] = [];
    if (choice === "yes" && task.decision_tag) {
      tags.push(task.decision_tag);
    }
    tags.push(...task.await_tags);
    return { kind: "tag-added", posts: tags.map((tag) => ({ tag })) };
  }
  return { kind: "human-decision", posts: [{ choice }] };
}

export async function submitTask(
  client: Client,
  task: TaskItem,
  choice: string,
  actor: string,
): Promise<void> {
  const key = taskKey(task);
  if (inflight.has(key)) {
    return; // double-submit guard
  }
  inflight.add(key);
  try {
    const plan = planSubmission(task, choice);
    for (const post of plan.posts) {
      if (plan.kind === "tag-added") {
        await client.signal(task.run_id, {
          kind: "tag-added",
          actor,
          tag: post.tag,
          resource: task.resource,
        });
      } else {
        await client.signal(task.run_id, {
          kind: "human-decision",
          actor,
          node_id: task.node_id,
          choice: post.choice,
        });
      }
    }
  } finally {
    inflight.delete(key);
  }
}
