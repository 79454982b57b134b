// Minimal RIFF/WAVE header reader: enough to confirm a payload is a
// decodable WAV and report its shape. Sample data itself is never touched
// client-side; playback goes through the browser's audio element.

export interface WavInfo {
  formatTag: number;
  channels: number;
  sampleRate: number;
  bitsPerSample: number;
  frames: number;
  durationSeconds: number;
}

export function decodeWavHeader(buffer: ArrayBuffer): WavInfo {
  const view = new DataView(buffer);
  const tag = (offset: number) =>
    String.fromCharCode(
      view.getUint8(offset),
      view.getUint8(offset + 1),
      view.getUint8(offset + 2),
      view.getUint8(offset + 3),
    );
  if (buffer.byteLength < 12 || tag(0) !== 'RIFF' || tag(8) !== 'WAVE') {
    throw new Error('not a RIFF/WAVE payload');
  }
  let position = 12;
  let fmt: { formatTag: number; channels: number; sampleRate: number; bits: number } | null =
    null;
  let dataBytes = -1;
  while (position + 8 <= buffer.byteLength) {
    const chunk = tag(position);
    const size = view.getUint32(position + 4, true);
    const start = position + 8;
    if (start + size > buffer.byteLength) throw new Error(`truncated ${chunk} chunk`);
    if (chunk === 'fmt ') {
      fmt = {
        formatTag: view.getUint16(start, true),
        channels: view.getUint16(start + 2, true),
        sampleRate: view.getUint32(start + 4, true),
        bits: view.getUint16(start + 14, true),
      };
    } else if (chunk === 'data') {
      dataBytes = size;
    }
    position = start + size + (size % 2);
  }
  if (!fmt || dataBytes < 0) throw new Error('missing fmt or data chunk');
  const bytesPerFrame = (fmt.bits / 8) * fmt.channels;
  const frames = Math.floor(dataBytes / bytesPerFrame);
  return {
    formatTag: fmt.formatTag,
    channels: fmt.channels,
    sampleRate: fmt.sampleRate,
    bitsPerSample: fmt.bits,
    frames,
    durationSeconds: frames / fmt.sampleRate,
  };
}
