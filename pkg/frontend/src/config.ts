import type { UiConfig } from "./types.js";

export const DEFAULT_CONFIG: UiConfig = {
  api_base_url: "",
  capture_interval_ms: 300,
  target_samples: 50,
};

export function validateConfig(raw: Partial<UiConfig>): UiConfig {
  const cfg = { ...DEFAULT_CONFIG, ...raw };
  if (!(cfg.capture_interval_ms >= 50)) {
    throw new Error(`capture_interval_ms must be >= 50, got ${cfg.capture_interval_ms}`);
  }
  if (!(cfg.target_samples >= 1)) {
    throw new Error(`target_samples must be >= 1, got ${cfg.target_samples}`);
  }
  return cfg;
}

export async function loadConfig(fetchFn: typeof fetch): Promise<UiConfig> {
  const resp = await fetchFn("./config.json");
  if (!resp.ok) return DEFAULT_CONFIG;
  return validateConfig((await resp.json()) as Partial<UiConfig>);
}
