import { ApiError, FamsClient } from "./api";
import { renderThumbnail } from "./thumbs";
import { CandidateView, Role, TaskView } from "./types";

export interface AppOptions {
    /** Polling interval for the open view; 0 disables (tests refresh manually). */
    pollMs?: number;
    fetchImpl?: typeof fetch;
}

interface Session {
    client: FamsClient;
    apiKey: string;
    role: Role;
}

/** The whole UI is rebuilt from server state on every refresh: a page
 *  reload (or a stale-version conflict) reconstructs the identical view. */
export class App {
    private session: Session | null = null;
    private openTaskId: string | null = null;
    private notice = "";
    private timer: ReturnType<typeof setInterval> | null = null;
    private pollMs: number;
    private fetchImpl: typeof fetch;

    constructor(private root: HTMLElement, private baseUrl: string = "",
                options: AppOptions = {}) {
        this.pollMs = options.pollMs ?? 2000;
        this.fetchImpl = options.fetchImpl ?? fetch.bind(globalThis);
    }

    // -- lifecycle ----------------------------------------------------------

    mount(): void {
        this.renderLogin();
    }

    stop(): void {
        if (this.timer !== null) {
            clearInterval(this.timer);
            this.timer = null;
        }
    }

    private startPolling(): void {
        this.stop();
        if (this.pollMs > 0) {
            this.timer = setInterval(() => void this.refresh(), this.pollMs);
        }
    }

    get role(): Role | null {
        return this.session?.role ?? null;
    }

    get currentTaskId(): string | null {
        return this.openTaskId;
    }

    // -- session ----------------------------------------------------------------

    async login(apiKey: string): Promise<void> {
        const client = new FamsClient(this.baseUrl, apiKey, this.fetchImpl);
        try {
            const role = await client.role();
            this.session = { client, apiKey, role };
            this.notice = "";
            this.openTaskId = null;
            await this.refresh();
            this.startPolling();
        } catch (error) {
            this.session = null;
            this.renderLogin(error instanceof ApiError
                ? `login failed: ${error.message}`
                : `service unreachable: ${error}`);
            throw error;
        }
    }

    logout(message = ""): void {
        this.stop();
        this.session = null;
        this.openTaskId = null;
        this.renderLogin(message);
    }

    /** Refetch server state for the open view and rebuild the DOM. */
    async refresh(): Promise<void> {
        if (this.session === null) {
            return;
        }
        try {
            if (this.openTaskId === null) {
                const tasks = await this.session.client.listTasks(
                    this.session.role === "annotator" ? this.session.apiKey : undefined,
                );
                this.renderBoard(tasks);
            } else {
                const task = await this.session.client.getTask(this.openTaskId);
                const candidates = await this.session.client.candidates(this.openTaskId);
                this.renderGrid(task, candidates);
            }
        } catch (error) {
            if (error instanceof ApiError && error.status === 401) {
                this.logout("session rejected; enter a valid key");
                return;
            }
            this.setNotice(`refresh failed: ${error instanceof Error ? error.message : error}`);
        }
    }

    async openTask(taskId: string): Promise<void> {
        this.openTaskId = taskId;
        await this.refresh();
    }

    async backToBoard(): Promise<void> {
        this.openTaskId = null;
        await this.refresh();
    }

    private setNotice(text: string): void {
        this.notice = text;
        const banner = this.root.querySelector(".notice");
        if (banner !== null) {
            banner.textContent = text;
        }
    }

    /** Mutations funnel through here: stale-version conflicts refetch the
     *  grid with a notice instead of surfacing as errors. An action may
     *  return a string to override the default success notice. */
    private async act(action: () => Promise<unknown>, okNotice: string): Promise<void> {
        try {
            const custom = await action();
            this.notice = typeof custom === "string" ? custom : okNotice;
        } catch (error) {
            if (error instanceof ApiError && error.status === 409) {
                this.notice = "task changed on the server; view refreshed";
            } else if (error instanceof ApiError && error.status === 401) {
                this.logout("session rejected; enter a valid key");
                return;
            } else {
                this.notice = `action failed: ${error instanceof Error ? error.message : error}`;
            }
        }
        await this.refresh();
    }

    // -- views -------------------------------------------------------------------

    private clear(): HTMLElement {
        this.root.innerHTML = "";
        const shell = document.createElement("div");
        shell.className = "shell";
        const banner = document.createElement("div");
        banner.className = "notice";
        banner.textContent = this.notice;
        shell.appendChild(banner);
        this.root.appendChild(shell);
        return shell;
    }

    private renderLogin(message = ""): void {
        this.notice = message;
        const shell = this.clear();
        const form = document.createElement("form");
        form.className = "login";
        form.innerHTML = `
            <h1>Annotation workbench</h1>
            <label>API key <input name="api_key" type="password" autocomplete="off"></label>
            <button type="submit">Sign in</button>
        `;
        form.addEventListener("submit", (event) => {
            event.preventDefault();
            const input = form.querySelector<HTMLInputElement>("input[name=api_key]");
            if (input !== null && input.value.trim() !== "") {
                void this.login(input.value.trim()).catch(() => undefined);
            }
        });
        shell.appendChild(form);
    }

    private renderBoard(tasks: TaskView[]): void {
        const session = this.session;
        if (session === null) {
            return;
        }
        const shell = this.clear();
        const heading = document.createElement("h1");
        heading.textContent = `Tasks (${session.role})`;
        shell.appendChild(heading);

        if (session.role === "manager") {
            shell.appendChild(this.buildCreateForm());
        }

        const table = document.createElement("table");
        table.className = "task-board";
        table.innerHTML = `
            <thead><tr>
                <th>Task</th><th>Status</th><th>Label</th><th>Keywords</th>
                <th>Selected</th><th>Assignee</th><th>Dataset version</th><th></th>
            </tr></thead>
        `;
        const body = document.createElement("tbody");
        for (const task of tasks) {
            body.appendChild(this.buildTaskRow(task, session.role));
        }
        table.appendChild(body);
        shell.appendChild(table);

        const signout = document.createElement("button");
        signout.className = "signout";
        signout.textContent = "Sign out";
        signout.addEventListener("click", () => this.logout());
        shell.appendChild(signout);
    }

    private buildCreateForm(): HTMLFormElement {
        const form = document.createElement("form");
        form.className = "create-task";
        form.innerHTML = `
            <input name="keywords" placeholder="keywords, comma separated">
            <input name="count" type="number" value="50" min="1">
            <input name="label" placeholder="visual food label">
            <button type="submit">Create task</button>
        `;
        form.addEventListener("submit", (event) => {
            event.preventDefault();
            const keywords = form.querySelector<HTMLInputElement>("input[name=keywords]")!
                .value.split(",").map((k) => k.trim()).filter((k) => k !== "");
            const count = Number(form.querySelector<HTMLInputElement>("input[name=count]")!.value);
            const label = form.querySelector<HTMLInputElement>("input[name=label]")!.value.trim();
            if (keywords.length === 0 || label === "" || !(count >= 1)) {
                this.setNotice("create task: keywords, count and label are required");
                return;
            }
            void this.act(
                () => this.session!.client.createTask(keywords, count, label),
                "task created",
            );
        });
        return form;
    }

    private buildTaskRow(task: TaskView, role: Role): HTMLTableRowElement {
        const row = document.createElement("tr");
        row.dataset.taskId = task.id;
        row.innerHTML = `
            <td>${task.id}</td>
            <td>${task.status}${task.shortfall ? " (shortfall)" : ""}</td>
            <td>${task.label}</td>
            <td>${task.keywords.join(", ")}</td>
            <td>${task.candidate_count > 0 ? `${task.selected_count}/${task.candidate_count}` : "-"}</td>
            <td>${task.assignee ?? "-"}</td>
            <td class="dataset-version">${task.dataset_version ?? "-"}</td>
        `;
        const actions = document.createElement("td");

        if (role === "manager" && task.status === "draft") {
            const assignee = document.createElement("input");
            assignee.placeholder = "annotator key";
            assignee.className = "assignee-input";
            const assign = document.createElement("button");
            assign.textContent = "Assign";
            assign.className = "assign-button";
            assign.addEventListener("click", () =>
                void this.act(
                    () => this.session!.client.assign(task.id, assignee.value.trim()),
                    `assigned ${task.id}`,
                ));
            actions.append(assignee, assign);
        }
        if (role === "manager" && task.status === "submitted") {
            const confirm = document.createElement("button");
            confirm.textContent = "Confirm";
            confirm.className = "confirm-button";
            confirm.addEventListener("click", () =>
                void this.act(async () => {
                    const result = await this.session!.client.confirm(task.id);
                    return `confirmed ${task.id}: dataset version ${result.dataset_version}`;
                }, "confirmed"));
            actions.appendChild(confirm);
        }
        if (task.candidate_count > 0 || task.status !== "draft") {
            const open = document.createElement("button");
            open.textContent = "Open";
            open.className = "open-button";
            open.addEventListener("click", () => void this.openTask(task.id));
            actions.appendChild(open);
        }
        if (task.error_note !== null) {
            const note = document.createElement("span");
            note.className = "error-note";
            note.textContent = task.error_note;
            actions.appendChild(note);
        }
        row.appendChild(actions);
        return row;
    }

    private renderGrid(task: TaskView, candidates: CandidateView[]): void {
        const session = this.session;
        if (session === null) {
            return;
        }
        const shell = this.clear();
        const heading = document.createElement("h1");
        heading.textContent = `${task.id}: ${task.label} (${task.status})`;
        shell.appendChild(heading);

        const back = document.createElement("button");
        back.textContent = "Back";
        back.className = "back-button";
        back.addEventListener("click", () => void this.backToBoard());
        shell.appendChild(back);

        const mine = session.role === "annotator" && task.assignee === session.apiKey;
        const editable = mine && task.status === "assigned";
        const pending = new Map<string, boolean>();

        if (editable) {
            const bulk = document.createElement("div");
            bulk.className = "bulk";
            const checkAll = document.createElement("button");
            checkAll.textContent = "Check all";
            checkAll.className = "check-all";
            const uncheckAll = document.createElement("button");
            uncheckAll.textContent = "Uncheck all";
            uncheckAll.className = "uncheck-all";
            const setAll = (value: boolean) => {
                shell.querySelectorAll<HTMLInputElement>(".candidate input[type=checkbox]")
                    .forEach((box) => {
                        box.checked = value;
                        pending.set(box.dataset.candidateId!, value);
                    });
            };
            checkAll.addEventListener("click", () => setAll(true));
            uncheckAll.addEventListener("click", () => setAll(false));
            bulk.append(checkAll, uncheckAll);
            shell.appendChild(bulk);
        }

        const grid = document.createElement("div");
        grid.className = "grid";
        for (const candidate of candidates) {
            const cell = document.createElement("label");
            cell.className = "candidate";
            cell.title = `${candidate.source_keyword} (${candidate.candidate_id})`;
            cell.appendChild(renderThumbnail(candidate.thumbnail_b64));
            const box = document.createElement("input");
            box.type = "checkbox";
            box.checked = candidate.selected;
            box.disabled = !editable;
            box.dataset.candidateId = candidate.candidate_id;
            box.addEventListener("change", () => pending.set(candidate.candidate_id, box.checked));
            cell.appendChild(box);
            grid.appendChild(cell);
        }
        shell.appendChild(grid);

        if (editable) {
            const submit = document.createElement("button");
            submit.textContent = "Submit selections";
            submit.className = "submit-button";
            submit.addEventListener("click", () =>
                void this.act(async () => {
                    let version = task.version;
                    if (pending.size > 0) {
                        const updated = await session.client.updateSelections(
                            task.id, Object.fromEntries(pending), version,
                        );
                        version = updated.version;
                    }
                    await session.client.submit(task.id, version);
                    this.openTaskId = null;
                    return `${task.id} submitted`;
                }, "submitted"));
            shell.appendChild(submit);
        }
    }
}
