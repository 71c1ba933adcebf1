import { App } from "./app";

const root = document.getElementById("app");
if (root === null) {
    throw new Error("missing #app container");
}
// Same-origin deployment: the service mounts this bundle at /ui.
const app = new App(root, "");
app.mount();
