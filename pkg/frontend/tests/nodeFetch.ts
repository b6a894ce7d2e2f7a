import http from "node:http";
import type { FetchLike } from "../src/api.js";

/**
 * Minimal fetch over node:http for tests that run inside a DOM
 * environment, where the simulated browser fetch enforces same-origin
 * policy against the local test service.
 */
export const nodeFetch: FetchLike = (url, init) =>
  new Promise((resolve, reject) => {
    const req = http.request(
      url,
      {
        method: init?.method ?? "GET",
        headers: (init?.headers as Record<string, string>) ?? {},
      },
      (res) => {
        const chunks: Buffer[] = [];
        res.on("data", (c) => chunks.push(c));
        res.on("end", () => {
          const text = Buffer.concat(chunks).toString("utf-8");
          const status = res.statusCode ?? 0;
          resolve({
            ok: status >= 200 && status < 300,
            status,
            statusText: res.statusMessage ?? "",
            json: async () => JSON.parse(text || "{}"),
            text: async () => text,
          } as Response);
        });
      },
    );
    req.on("error", reject);
    if (init?.body) req.write(init.body);
    req.end();
  });
