import { CandidateView, ConfirmResponse, Role, TaskView } from "./types";

export class ApiError extends Error {
    constructor(public status: number, message: string) {
        super(message);
        this.name = "ApiError";
    }
}

/** Typed client for the /fams endpoints. The api key travels as a query
 *  parameter on every call, matching the service contract. */
export class FamsClient {
    constructor(
        private baseUrl: string,
        private apiKey: string,
        private fetchImpl: typeof fetch = fetch,
    ) {}

    private url(path: string, params: Record<string, string> = {}): string {
        const search = new URLSearchParams({ api_key: this.apiKey, ...params });
        return `${this.baseUrl}${path}?${search.toString()}`;
    }

    private async request<T>(method: string, path: string, body?: unknown,
                             params: Record<string, string> = {}): Promise<T> {
        const response = await this.fetchImpl(this.url(path, params), {
            method,
            headers: body === undefined ? {} : { "Content-Type": "application/json" },
            body: body === undefined ? undefined : JSON.stringify(body),
        });
        const payload = await response.json().catch(() => ({}));
        if (!response.ok) {
            const message = (payload as { status_msg?: string }).status_msg
                ?? `request failed with ${response.status}`;
            throw new ApiError(response.status, message);
        }
        return payload as T;
    }

    role(): Promise<Role> {
        return this.request<{ role: Role }>("GET", "/fams/role")
            .then((r) => r.role);
    }

    listTasks(assignee?: string): Promise<TaskView[]> {
        const params: Record<string, string> =
            assignee === undefined ? {} : { assignee };
        return this.request<TaskView[]>("GET", "/fams/tasks", undefined, params);
    }

    getTask(taskId: string): Promise<TaskView> {
        return this.request<TaskView>("GET", `/fams/tasks/${taskId}`);
    }

    candidates(taskId: string): Promise<CandidateView[]> {
        return this.request<CandidateView[]>("GET", `/fams/tasks/${taskId}/candidates`);
    }

    createTask(keywords: string[], countPerKeyword: number, label: string): Promise<TaskView> {
        return this.request<TaskView>("POST", "/fams/tasks", {
            keywords,
            count_per_keyword: countPerKeyword,
            label,
        });
    }

    assign(taskId: string, assignee: string): Promise<TaskView> {
        return this.request<TaskView>("POST", `/fams/tasks/${taskId}/assign`, { assignee });
    }

    updateSelections(taskId: string, selections: Record<string, boolean>,
                     expectedVersion: number): Promise<TaskView> {
        return this.request<TaskView>("POST", `/fams/tasks/${taskId}/selections`, {
            selections,
            expected_version: expectedVersion,
        });
    }

    submit(taskId: string, expectedVersion: number | null): Promise<TaskView> {
        return this.request<TaskView>("POST", `/fams/tasks/${taskId}/submit`, {
            expected_version: expectedVersion,
        });
    }

    confirm(taskId: string): Promise<ConfirmResponse> {
        return this.request<ConfirmResponse>("POST", `/fams/tasks/${taskId}/confirm`);
    }
}
