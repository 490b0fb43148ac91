import { GatewayClient } from './client';
import { ConsoleStore } from './readModel';
import { renderHierarchy, renderInterventionForm, renderTimeline } from './render';

// Browser bootstrap: poll the gateway and redraw the three panels.
export function mountConsole(root: HTMLElement, baseUrl: string): () => void {
  const client = new GatewayClient(baseUrl);
  const store = new ConsoleStore();

  root.innerHTML = [
    '<div id="hierarchy"></div>',
    '<div id="timeline"></div>',
    '<div id="intervention"></div>',
  ].join('');
  const hierarchyEl = root.querySelector('#hierarchy') as HTMLElement;
  const timelineEl = root.querySelector('#timeline') as HTMLElement;
  const interventionEl = root.querySelector('#intervention') as HTMLElement;

  const redraw = () => {
    hierarchyEl.innerHTML = renderHierarchy(store);
    timelineEl.innerHTML = renderTimeline(store.timeline());
    const agentIds = Object.keys(store.snapshot?.agents ?? {});
    if (!interventionEl.querySelector('form')) {
      interventionEl.innerHTML = renderInterventionForm(agentIds);
      wireForm(interventionEl, client);
    }
  };

  const refreshSnapshot = async () => {
    try {
      store.applySnapshot(await client.fetchSnapshot());
      redraw();
    } catch {
      // gateway briefly unavailable: keep the last view
    }
  };

  const stopEvents = client.startPolling((event) => {
    store.applyEvent(event);
    redraw();
  });
  const snapshotTimer = setInterval(refreshSnapshot, 1000);
  void refreshSnapshot();

  return () => {
    stopEvents();
    clearInterval(snapshotTimer);
  };
}

function wireForm(container: HTMLElement, client: GatewayClient): void {
  const form = container.querySelector('form');
  if (!form) return;
  form.addEventListener('submit', (evt) => {
    evt.preventDefault();
    const data = new FormData(form);
    const kind = String(data.get('kind') ?? '');
    const agentId = String(data.get('agent_id') ?? '');
    let extra: Record<string, unknown> = {};
    const raw = String(data.get('params') ?? '').trim();
    if (raw) {
      try {
        extra = JSON.parse(raw) as Record<string, unknown>;
      } catch {
        return;
      }
    }
    void client.intervene({ kind, params: { agent_id: agentId, ...extra } });
  });
}
