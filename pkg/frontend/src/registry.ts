/** Registry polling: GET /list on the run directory service. */

export interface RunEntry {
  run_id: string;
  host: string;
  port: number;
  http_port: number | null;
  dims: number[];
  heartbeat: number;
  meta: { components?: string[]; [k: string]: unknown };
  age: number;
}

export async function listRuns(registryUrl: string): Promise<RunEntry[]> {
  let base = registryUrl.trim().replace(/\/+$/, "");
  if (!base.startsWith("http")) base = "http://" + base;
  const resp = await fetch(base + "/list");
  if (!resp.ok) throw new Error(`registry replied ${resp.status}`);
  const body = (await resp.json()) as { runs: RunEntry[] };
  return body.runs;
}
