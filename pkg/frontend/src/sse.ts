/**
 * Server-sent events over plain fetch streaming.
 *
 * EventSource would do in a browser, but parsing the stream by hand
 * keeps the client identical under node for tests, and lets the
 * caller observe the terminal overflow event before the stream ends.
 */

export interface StreamEvent {
  event: string;
  data: string;
}

/** Parse one SSE byte stream into dispatched events. */
export async function* parseSseStream(
  body: ReadableStream<Uint8Array>,
): AsyncGenerator<StreamEvent> {
  const reader = body.getReader();
  const decoder = new TextDecoder();
  let buffer = "";
  let eventName = "message";
  let dataLines: string[] = [];
  try {
    for (;;) {
      const { done, value } = await reader.read();
      if (done) return;
      buffer += decoder.decode(value, { stream: true });
      for (;;) {
        const newline = buffer.indexOf("\n");
        if (newline < 0) break;
        let line = buffer.slice(0, newline);
        buffer = buffer.slice(newline + 1);
        if (line.endsWith("\r")) line = line.slice(0, -1);
        if (line === "") {
          // blank line dispatches the accumulated event
          if (dataLines.length > 0) {
            yield { event: eventName, data: dataLines.join("\n") };
          }
          eventName = "message";
          dataLines = [];
        } else if (line.startsWith(":")) {
          // comment, e.g. keepalive
        } else if (line.startsWith("event:")) {
          eventName = line.slice(6).trimStart();
        } else if (line.startsWith("data:")) {
          dataLines.push(line.slice(5).replace(/^ /, ""));
        }
        // other fields (id, retry) are not used by this service
      }
    }
  } finally {
    reader.releaseLock();
  }
}

/** Connect to an SSE endpoint and yield its events until the stream ends. */
export async function* streamEvents(
  url: string,
  signal?: AbortSignal,
): AsyncGenerator<StreamEvent> {
  const resp = await fetch(url, {
    signal,
    headers: { Accept: "text/event-stream" },
  });
  if (!resp.ok || !resp.body) {
    throw new Error(`event stream failed: HTTP ${resp.status}`);
  }
  yield* parseSseStream(resp.body);
}
