/** JSON Lines writing with the same atomicity discipline as the benchmark. */

import { atomicWrite } from './image';

export function writeJsonLines(filePath: string, records: unknown[]): void {
  const payload = records.length
    ? records.map((r) => JSON.stringify(r)).join('\n') + '\n'
    : '';
  atomicWrite(filePath, payload);
}
