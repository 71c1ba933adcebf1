import { describe, expect, it, vi } from "vitest";

import { ApiError, FamsClient } from "../src/api";

function stubFetch(status: number, body: unknown) {
    return vi.fn(async (input: RequestInfo | URL, init?: RequestInit) =>
        new Response(JSON.stringify(body), {
            status,
            headers: { "Content-Type": "application/json" },
        })) as unknown as typeof fetch;
}

describe("FamsClient", () => {
    it("puts the api key on every request", async () => {
        const impl = stubFetch(200, { role: "manager" });
        const client = new FamsClient("http://svc", "secret-key", impl);
        await client.role();
        const url = new URL((impl as any).mock.calls[0][0] as string);
        expect(url.pathname).toBe("/fams/role");
        expect(url.searchParams.get("api_key")).toBe("secret-key");
    });

    it("sends selections with the version stamp", async () => {
        const impl = stubFetch(200, {});
        const client = new FamsClient("", "k", impl);
        await client.updateSelections("task_0001", { c0001: false }, 7);
        const [url, init] = (impl as any).mock.calls[0];
        expect(String(url)).toContain("/fams/tasks/task_0001/selections");
        expect(init.method).toBe("POST");
        expect(JSON.parse(init.body)).toEqual({
            selections: { c0001: false },
            expected_version: 7,
        });
    });

    it("filters the task list by assignee", async () => {
        const impl = stubFetch(200, []);
        const client = new FamsClient("", "k", impl);
        await client.listTasks("annotator-key");
        const url = new URL((impl as any).mock.calls[0][0] as string, "http://x");
        expect(url.searchParams.get("assignee")).toBe("annotator-key");
    });

    it("raises ApiError with the server's status and message", async () => {
        const impl = stubFetch(409, { status_code: 409, status_msg: "task version is 9" });
        const client = new FamsClient("", "k", impl);
        const failure = client.submit("task_0001", 3);
        await expect(failure).rejects.toBeInstanceOf(ApiError);
        await expect(client.submit("task_0001", 3)).rejects.toMatchObject({
            status: 409,
            message: "task version is 9",
        });
    });
});
