/** DOM rendering for the operator console. All displayed values come
 * verbatim from the API via DashboardState. */
import type { Schedule, ScheduleEntry } from "./api.js";
import { drawChart } from "./chart.js";
import type { DashboardState } from "./state.js";
import type { Poller } from "./poller.js";

const EQUIPMENT_GROUPS = [
  ["on_ch", "Chillers"],
  ["on_ct", "Cooling towers"],
  ["on_cwp", "Condenser pumps"],
  ["on_chwp", "Chilled-water pumps"],
] as const;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  if (text) node.textContent = text;
  return node;
}

export class ConsoleView {
  private draft: ScheduleEntry = {
    on_ch: [1, 1, 1],
    on_ct: [1, 1, 1],
    on_cwp: [1, 1, 1],
    on_chwp: [1, 1, 1],
    chsp: 7,
  };
  private draftDay = 0;

  constructor(
    private readonly root: HTMLElement,
    private readonly poller: Poller,
  ) {
    this.build();
  }

  private build(): void {
    this.root.innerHTML = `
      <div id="banner" class="banner hidden">service unreachable — showing last known data</div>
      <div class="columns">
        <section class="panel">
          <h2>Live plant</h2>
          <canvas id="powerChart" width="560" height="180"></canvas>
          <div class="legend">
            <span style="color:#c0392b">measured total kW</span>
            <span style="color:#2980b9">optimizer predicted kW</span>
          </div>
          <canvas id="tempChart" width="560" height="120"></canvas>
          <div class="legend"><span style="color:#27ae60">condenser supply °C</span></div>
          <canvas id="loadChart" width="560" height="120"></canvas>
          <div class="legend"><span style="color:#8e44ad">cooling load RT</span></div>
          <dl id="latestFacts"></dl>
        </section>
        <section class="panel">
          <h2>Optimizer</h2>
          <p>status: <strong id="ddoState">unknown</strong></p>
          <button id="ddoOn">enable</button>
          <button id="ddoOff">disable</button>
          <p id="lastSolve"></p>
          <h2>Enrichment</h2>
          <label>window minutes
            <input id="enrichMin" type="number" value="30" min="5" max="120">
          </label>
          <button id="enrichBtn">request window</button>
          <h2>Setpoint</h2>
          <label>chilled-water setpoint °C
            <input id="chspInput" type="number" value="7" min="5" max="10" step="0.5">
          </label>
          <button id="chspBtn">apply</button>
          <h2>Savings</h2>
          <button id="savingsBtn">refresh</button>
          <div id="savingsBox"></div>
          <p id="errorBox" class="error"></p>
        </section>
        <section class="panel">
          <h2>Schedule (today)</h2>
          <div id="scheduleEditor"></div>
          <label>day index <input id="dayInput" type="number" value="0" min="0"></label>
          <label>chsp °C <input id="draftChsp" type="number" value="7" min="5" max="10" step="0.5"></label>
          <button id="scheduleBtn">submit schedule</button>
          <h2>Confirmed schedule</h2>
          <pre id="confirmedSchedule"></pre>
        </section>
      </div>`;
    this.buildScheduleEditor();
    this.wire();
  }

  private buildScheduleEditor(): void {
    const editor = this.root.querySelector("#scheduleEditor")!;
    for (const [key, label] of EQUIPMENT_GROUPS) {
      const row = el("div", { class: "sched-row" });
      row.appendChild(el("span", {}, label));
      this.draft[key].forEach((flag, i) => {
        const box = el("input", { type: "checkbox", "data-group": key, "data-index": String(i) });
        box.checked = flag === 1;
        box.addEventListener("change", () => {
          this.draft[key][i] = box.checked ? 1 : 0;
        });
        row.appendChild(box);
      });
      editor.appendChild(row);
    }
  }

  private wire(): void {
    const $ = (id: string) => this.root.querySelector<HTMLElement>(`#${id}`)!;
    $("ddoOn").addEventListener("click", () => void this.poller.toggleDdo(true));
    $("ddoOff").addEventListener("click", () => void this.poller.toggleDdo(false));
    $("enrichBtn").addEventListener("click", () => {
      const minutes = Number(
        this.root.querySelector<HTMLInputElement>("#enrichMin")!.value,
      );
      void this.poller.requestEnrichmentWindow(minutes);
    });
    $("chspBtn").addEventListener("click", () => {
      const chsp = Number(
        this.root.querySelector<HTMLInputElement>("#chspInput")!.value,
      );
      void this.poller.setSetpoint(chsp);
    });
    $("savingsBtn").addEventListener("click", () => void this.poller.refreshSavings());
    $("scheduleBtn").addEventListener("click", () => {
      this.draftDay = Number(
        this.root.querySelector<HTMLInputElement>("#dayInput")!.value,
      );
      this.draft.chsp = Number(
        this.root.querySelector<HTMLInputElement>("#draftChsp")!.value,
      );
      const entries: Schedule = { [String(this.draftDay)]: this.draft };
      void this.poller.submitSchedule(entries);
    });
  }

  render(state: DashboardState): void {
    const banner = this.root.querySelector("#banner")!;
    banner.classList.toggle("hidden", !state.stale);

    drawChart(
      this.root.querySelector<HTMLCanvasElement>("#powerChart")!,
      [
        { label: "measured", color: "#c0392b", series: state.totalKw },
        { label: "predicted", color: "#2980b9", series: state.predictedKw },
      ],
      "kW",
    );
    drawChart(
      this.root.querySelector<HTMLCanvasElement>("#tempChart")!,
      [{ label: "cwshdr", color: "#27ae60", series: state.cwshdr }],
      "°C",
    );
    drawChart(
      this.root.querySelector<HTMLCanvasElement>("#loadChart")!,
      [{ label: "load", color: "#8e44ad", series: state.loadRt }],
      "RT",
    );

    const facts = this.root.querySelector("#latestFacts")!;
    const r = state.latest;
    facts.innerHTML = r
      ? `<dt>minute</dt><dd>${r.ts}</dd>
         <dt>total power</dt><dd>${r.total_kw.toFixed(1)} kW</dd>
         <dt>load</dt><dd>${r.load_rt.toFixed(0)} RT</dd>
         <dt>weather</dt><dd>${r.db.toFixed(1)} °C / ${r.rh.toFixed(0)}%</dd>
         <dt>flows</dt><dd>${r.chfhdr.toFixed(0)} / ${r.cwfhdr.toFixed(0)} L/s</dd>
         <dt>speeds</dt><dd>cwp ${r.cwp_speed.toFixed(0)} · chwp ${r.chwp_speed.toFixed(0)} · ct ${r.ct_speed.toFixed(0)}</dd>`
      : "";

    const st = state.status;
    this.root.querySelector("#ddoState")!.textContent = st
      ? st.ddo_enabled
        ? "enabled"
        : "disabled"
      : "unknown";
    this.root.querySelector("#lastSolve")!.textContent =
      st?.last_solve && st.last_solve.predicted_kw !== null
        ? `last solve @${st.last_solve.ts}: ${st.last_solve.predicted_kw.toFixed(1)} kW predicted, ${st.last_solve.solver_evals} evals`
        : "";
    this.root.querySelector("#confirmedSchedule")!.textContent = st
      ? JSON.stringify(st.schedule, null, 2)
      : "";

    const savings = this.root.querySelector("#savingsBox")!;
    savings.textContent = state.savings
      ? `mean saving ${state.savings.mean_saving_pct.toFixed(2)}% over ${state.savings.days.length} day(s)`
      : "";

    this.root.querySelector("#errorBox")!.textContent = state.lastError ?? "";
  }
}
