// End-to-end workflow against the real backend: the suite prepares a tiny
// corpus and checkpoint with the CLI, starts the service on a scratch
// port, then drives the UI through jsdom with real fetch. Covers the
// acceptance flow: annotator unchecks 3 of 50 and submits (server shows
// 47 selected), manager confirm surfaces the new dataset version id, and
// the annotator view carries no confirm control.

import { spawn, spawnSync, ChildProcess } from "node:child_process";
import { mkdtempSync, writeFileSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { FamsClient } from "../src/api";
import { App } from "../src/app";

const PORT = 8799;
const BASE = `http://127.0.0.1:${PORT}`;

let server: ChildProcess | null = null;
let managerKey = "";
let annotatorKey = "";

function cli(args: string[], env: NodeJS.ProcessEnv): string {
    const result = spawnSync("foodrec", args, { env, encoding: "utf-8" });
    if (result.status !== 0) {
        throw new Error(`foodrec ${args.join(" ")} failed: ${result.stderr}`);
    }
    return result.stdout;
}

async function waitForHealth(timeoutMs: number): Promise<void> {
    const deadline = Date.now() + timeoutMs;
    while (Date.now() < deadline) {
        try {
            const response = await fetch(`${BASE}/health`);
            if (response.ok) {
                return;
            }
        } catch {
            // not up yet
        }
        await new Promise((resolve) => setTimeout(resolve, 250));
    }
    throw new Error("service did not come up");
}

beforeAll(async () => {
    const work = mkdtempSync(join(tmpdir(), "fams-ui-"));
    const configPath = join(work, "foodrec.json");
    const env = { ...process.env, FOODAI_CONFIG: configPath };

    const config = {
        storage_root: join(work, "storage"),
        checkpoint_path: join(work, "storage", "model.ckpt"),
        host: "127.0.0.1",
        port: PORT,
        seed: 11,
        timezone: "UTC",
        fams_roles: {} as Record<string, string>,
        fams_source: { type: "synthetic" },
        non_food_threshold: null,
        ui_dist: null,
    };
    writeFileSync(configPath, JSON.stringify(config, null, 2));

    const spec = {
        seed: 2,
        non_food_count: 6,
        classes: [
            { name: "Orange Juice", super_category: "Drinks", count: 12, shape: "circle", base_hue: 30 },
            { name: "Kopi", super_category: "Drinks", count: 12, shape: "stripes", base_hue: 210 },
        ],
    };
    const specPath = join(work, "spec.json");
    writeFileSync(specPath, JSON.stringify(spec));

    cli(["gen-corpus", "--spec", specPath], env);
    const splitsPath = join(work, "splits.json");
    cli(["split", "--version", "1", "--seed", "0", "--out", splitsPath], env);
    cli(["train", "--splits", splitsPath, "--epochs", "1", "--seed", "0"], env);

    managerKey = JSON.parse(cli(["keys", "create", "--organization", "Managers"], env)).key;
    annotatorKey = JSON.parse(cli(["keys", "create", "--organization", "Annotators"], env)).key;
    cli(["keys", "approve", "--key", managerKey], env);
    cli(["keys", "approve", "--key", annotatorKey], env);

    config.fams_roles = { [managerKey]: "manager", [annotatorKey]: "annotator" };
    writeFileSync(configPath, JSON.stringify(config, null, 2));

    server = spawn("foodrec", ["serve"], { env, stdio: ["ignore", "pipe", "pipe"] });
    const logPath = join(work, "server.log");
    server.stdout?.on("data", (chunk) => writeFileSync(logPath, chunk, { flag: "a" }));
    server.stderr?.on("data", (chunk) => writeFileSync(logPath, chunk, { flag: "a" }));
    await waitForHealth(60_000);
});

afterAll(() => {
    server?.kill();
});

function freshRoot(): HTMLElement {
    document.body.innerHTML = '<div id="app"></div>';
    return document.getElementById("app")!;
}

describe("live workflow", () => {
    let taskId = "";

    it("manager creates and assigns a 50-candidate task", async () => {
        const manager = new FamsClient(BASE, managerKey);
        const created = await manager.createTask(["orange juice"], 50, "orange_juice");
        taskId = created.id;
        const assigned = await manager.assign(taskId, annotatorKey);
        expect(assigned.status).toBe("assigned");
        const task = await manager.getTask(taskId);
        expect(task.candidate_count).toBe(50);
        expect(task.selected_count).toBe(50);
    });

    it("annotator view contains no confirm control", async () => {
        const root = freshRoot();
        const app = new App(root, BASE, { pollMs: 0 });
        app.mount();
        await app.login(annotatorKey);
        expect(app.role).toBe("annotator");
        expect(root.querySelector(".confirm-button")).toBeNull();
        expect(root.querySelector("form.create-task")).toBeNull();
        expect(root.querySelector(`tr[data-task-id="${taskId}"]`)).not.toBeNull();
        app.stop();
    });

    it("annotator unchecks 3 of 50 and submits; server shows 47 selected", async () => {
        const root = freshRoot();
        const app = new App(root, BASE, { pollMs: 0 });
        app.mount();
        await app.login(annotatorKey);
        await app.openTask(taskId);

        const boxes = [...root.querySelectorAll<HTMLInputElement>(
            ".candidate input[type=checkbox]",
        )];
        expect(boxes).toHaveLength(50);
        for (const box of boxes.slice(0, 3)) {
            box.checked = false;
            box.dispatchEvent(new Event("change"));
        }
        root.querySelector<HTMLButtonElement>(".submit-button")!.click();
        await new Promise((resolve) => setTimeout(resolve, 300));

        const serverTask = await new FamsClient(BASE, annotatorKey).getTask(taskId);
        expect(serverTask.status).toBe("submitted");
        expect(serverTask.selected_count).toBe(47);
        app.stop();
    });

    it("manager confirm surfaces the new dataset version id", async () => {
        const root = freshRoot();
        const app = new App(root, BASE, { pollMs: 0 });
        app.mount();
        await app.login(managerKey);

        const confirmButton = root.querySelector<HTMLButtonElement>(
            `tr[data-task-id="${taskId}"] .confirm-button`,
        );
        expect(confirmButton).not.toBeNull();
        confirmButton!.click();
        await new Promise((resolve) => setTimeout(resolve, 1000));

        const serverTask = await new FamsClient(BASE, managerKey).getTask(taskId);
        expect(serverTask.status).toBe("confirmed");
        expect(serverTask.dataset_version).toBe(2);

        expect(root.querySelector(".notice")!.textContent)
            .toContain(`dataset version ${serverTask.dataset_version}`);
        const versionCell = root.querySelector(
            `tr[data-task-id="${taskId}"] .dataset-version`,
        );
        expect(versionCell!.textContent).toBe(String(serverTask.dataset_version));
        app.stop();
    });

    it("dataset version 2 holds the 47 ingested images", async () => {
        const health = await (await fetch(`${BASE}/health`)).json();
        expect(health.dataset_version).toBe(2);
    });
});
