/** Single base-URL setting, persisted locally alongside the operator name. */

export interface Settings {
  baseUrl: string;
  workspace: string;
  actor: string;
}

const KEY = "graphflow-dashboard-settings";

export const DEFAULTS: Settings = {
  baseUrl: "http://127.0.0.1:8321",
  workspace: "default",
  actor: "",
};

export function loadSettings(storage: Pick<Storage, "getItem"> = localStorage): Settings {
  try {
    const raw = storage.getItem(KEY);
    if (!raw) return { ...DEFAULTS };
    return { ...DEFAULTS, ...(JSON.parse(raw) as Partial<Settings>) };
  } catch {
    return { ...DEFAULTS };
  }
}

export function saveSettings(
  settings: Settings,
  storage: Pick<Storage, "setItem"> = localStorage,
): void {
  storage.setItem(KEY, JSON.stringify(settings));
}
