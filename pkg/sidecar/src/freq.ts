export interface FreqEntry {
  type: string;
  count: number;
}

export interface Candidate {
  type: string;
  score: number;
}

/**
 * Parse a frequency table: one `type count` pair per line, `#` comments.
 * Entries are ordered by count descending, ties lexicographic: the same
 * ordering the engine's in-process baseline uses, so scores match exactly.
 */
export function parseFrequencyTable(text: string): FreqEntry[] {
  const entries: FreqEntry[] = [];
  for (const raw of text.split("\n")) {
    const line = raw.split("#", 1)[0].trim();
    if (!line) continue;
    const splitAt = line.lastIndexOf(" ");
    if (splitAt < 0) {
      throw new Error(`frequency table line has no count: ${JSON.stringify(raw)}`);
    }
    const type = line.slice(0, splitAt).trim();
    const count = Number(line.slice(splitAt + 1));
    if (!Number.isFinite(count)) {
      throw new Error(`bad count in frequency table line: ${JSON.stringify(raw)}`);
    }
    entries.push({ type, count });
  }
  entries.sort((a, b) => b.count - a.count || (a.type < b.type ? -1 : a.type > b.type ? 1 : 0));
  return entries;
}

/**
 * Top-k of the ten most frequent types, scored count/total-of-top-ten.
 * The float arithmetic mirrors the engine (left-fold sum in table order,
 * then one division) so both sides produce bit-identical doubles.
 */
export function topCandidates(entries: FreqEntry[], k: number): Candidate[] {
  const topTen = entries.slice(0, 10);
  if (topTen.length === 0) return [];
  let total = 0.0;
  for (const entry of topTen) {
    total += entry.count;
  }
  return topTen.slice(0, k).map((entry) => ({ type: entry.type, score: entry.count / total }));
}
