import { createApp } from "./app.js";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app mount point");

createApp(root, {
  baseUrl: (window as { RAGLINE_API_BASE?: string }).RAGLINE_API_BASE ?? "",
});
