// Mirrors the service's JSON response models.

export type Role = "manager" | "annotator";

export type TaskStatus = "draft" | "assigned" | "submitted" | "confirmed";

export interface TaskView {
    id: string;
    status: TaskStatus;
    label: string;
    keywords: string[];
    requested_count: number;
    assignee: string | null;
    version: number;
    candidate_count: number;
    selected_count: number;
    shortfall: boolean;
    dataset_version: number | null;
    error_note: string | null;
}

export interface CandidateView {
    candidate_id: string;
    source_keyword: string;
    full_ref: string;
    thumbnail_b64: string;   // base64 of 8x8 RGB bytes
    selected: boolean;
}

export interface ConfirmResponse {
    task: TaskView;
    dataset_version: number;
    ingested_count: number;
}
