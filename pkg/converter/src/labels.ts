/**
 * Clip label table: one value per clip, in clip order. Accepts the
 * dataset's numeric coding (-1 negative, 0 neutral, 1 positive) or the
 * words; output uses the exchange encoding negative=0, neutral=1,
 * positive=2.
 */

const ENCODING: Record<string, number> = {
  "-1": 0, negative: 0,
  "0": 1, neutral: 1,
  "1": 2, positive: 2,
};

export function encodeLabel(token: string): number {
  const key = token.trim().toLowerCase();
  if (!(key in ENCODING)) {
    throw new Error(`unknown label ${JSON.stringify(token)}; expected ` +
      `-1/0/1 or negative/neutral/positive`);
  }
  return ENCODING[key];
}

export function parseLabelTable(text: string): number[] {
  const tokens = text
    .split("\n")
    .map((line) => line.split("#", 1)[0])
    .join(" ")
    .split(/[\s,]+/)
    .filter((t) => t.length > 0);
  if (tokens.length === 0) throw new Error("label table is empty");
  return tokens.map(encodeLabel);
}
