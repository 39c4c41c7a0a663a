import { ApiClient } from "./api.js";
import { AuthoringApp } from "./app.js";

const params = new URLSearchParams(window.location.search);
const baseUrl = params.get("api") ?? "http://127.0.0.1:8787";
const projectId = params.get("project") ?? "demo";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app container");

AuthoringApp.boot(root, new ApiClient(baseUrl), projectId).catch((error) => {
  root.textContent = `failed to load project ${projectId}: ${error}`;
});
