import { ApiClient } from "./api.js";
import { Poller, DEFAULT_POLL_INTERVAL_MS } from "./poller.js";
import { ConsoleView } from "./ui.js";

const params = new URLSearchParams(window.location.search);
const baseUrl = params.get("api") ?? "http://127.0.0.1:8421";

const api = new ApiClient(baseUrl);
const poller = new Poller(api, (state) => view.render(state));
const view = new ConsoleView(document.getElementById("app")!, poller);
poller.start(DEFAULT_POLL_INTERVAL_MS);
