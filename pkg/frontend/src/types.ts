/** Wire types of the annotation API (the serve endpoints of the Python CLI). */

export type TaskId = 1 | 2 | 3;

export const TASK_IDS: TaskId[] = [1, 2, 3];

/** One parent-child category link to judge. */
export interface ParentChildPayload {
  hierarchy_id: string;
  parent_path: string[];
  child: string;
}

/** All children of one parent, judged per child for coherence. */
export interface SiblingGroupPayload {
  hierarchy_id: string;
  parent_path: string[];
  children: string[];
}

/** One (claim, category) relevance pair; path starts at the root. */
export interface ClaimCategoryPayload {
  hierarchy_id: string;
  claim_index: number;
  claim_text: string;
  category_path: string[];
}

export type InstancePayload =
  | ParentChildPayload
  | SiblingGroupPayload
  | ClaimCategoryPayload;

export interface NextResponse {
  task: TaskId;
  done: boolean;
  remaining: number;
  instance_key?: string;
  hierarchy_id?: string;
  instance: InstancePayload | null;
}

export type Task1Value = "hypernym_hyponym" | "useful_breakdown" | "unrelated";

export const TASK1_VALUES: Task1Value[] = [
  "hypernym_hyponym",
  "useful_breakdown",
  "unrelated",
];

/** Task 1: one of three link judgements. Task 2: a flag per child.
 *  Task 3: relevant (true) or irrelevant (false). */
export type LabelValue = Task1Value | Record<string, boolean> | boolean;

export interface LabelRecord {
  task: TaskId;
  instance_key: string;
  annotator: string;
  label: LabelValue;
}

export interface TaskProgress {
  labeled: number;
  total: number;
}

export interface ProgressResponse {
  tasks: Record<string, TaskProgress>;
  annotators: Record<string, number>;
}

export interface HierarchyNode {
  name: string;
  claim_refs: number[];
  children: HierarchyNode[];
}

export interface HierarchyDocument {
  schema_version: number;
  id: string;
  review_id: string;
  root: HierarchyNode;
}
