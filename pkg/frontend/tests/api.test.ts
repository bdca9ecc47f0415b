// API client: request shapes out, response/error shapes in.

import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("ApiClient", () => {
  it("uploads multipart form data to /images", async () => {
    const fetchMock = vi.fn(async (_url: string, _init?: RequestInit) =>
      jsonResponse({ image_id: "abc", memorability: 0.61 }),
    );
    vi.stubGlobal("fetch", fetchMock);
    const api = new ApiClient();

    const resp = await api.uploadImage(new Blob(["x"]), "photo.png");

    expect(resp.image_id).toBe("abc");
    expect(fetchMock).toHaveBeenCalledTimes(1);
    const [url, init] = fetchMock.mock.calls[0] as unknown as [string, RequestInit];
    expect(url).toBe("/images");
    expect(init.method).toBe("POST");
    expect(init.body).toBeInstanceOf(FormData);
    const file = (init.body as FormData).get("file");
    expect(file).toBeInstanceOf(File);
    expect((file as File).name).toBe("photo.png");
  });

  it("prefixes a configured base URL", async () => {
    const fetchMock = vi.fn(async (_url: string, _init?: RequestInit) => jsonResponse({ seeds: [] }));
    vi.stubGlobal("fetch", fetchMock);
    const api = new ApiClient("http://other:9000");

    await api.seeds();

    expect(fetchMock.mock.calls[0]?.[0]).toBe("http://other:9000/seeds");
    expect(api.absoluteUrl("/results/r1")).toBe("http://other:9000/results/r1");
    expect(api.imageFileUrl("i1")).toBe("http://other:9000/images/i1/file");
  });

  it("passes q through to the recommendations query", async () => {
    const fetchMock = vi.fn(async (_url: string, _init?: RequestInit) =>
      jsonResponse({ image_id: "i", keep_original: false, recommendations: [] }),
    );
    vi.stubGlobal("fetch", fetchMock);
    const api = new ApiClient();

    await api.recommendations("img7", 4);
    expect(fetchMock.mock.calls[0]?.[0]).toBe("/images/img7/recommendations?q=4");

    await api.recommendations("img7");
    expect(fetchMock.mock.calls[1]?.[0]).toBe("/images/img7/recommendations");
  });

  it("sends seed_id and optional alpha in the synthesize body", async () => {
    const fetchMock = vi.fn(async (_url: string, _init?: RequestInit) =>
      jsonResponse({
        result_id: "r",
        measured_memorability: 0.7,
        predicted_gap: 0.1,
        result_url: "/results/r",
      }),
    );
    vi.stubGlobal("fetch", fetchMock);
    const api = new ApiClient();

    await api.synthesize("img", "seed-a", 0.5);
    let init = fetchMock.mock.calls[0]?.[1] as unknown as RequestInit;
    expect(JSON.parse(init.body as string)).toEqual({ seed_id: "seed-a", alpha: 0.5 });

    await api.synthesize("img", "seed-a");
    init = fetchMock.mock.calls[1]?.[1] as unknown as RequestInit;
    expect(JSON.parse(init.body as string)).toEqual({ seed_id: "seed-a" });
  });

  it("surfaces the service detail message verbatim on errors", async () => {
    vi.stubGlobal(
      "fetch",
      vi.fn(async () => jsonResponse({ detail: "upload exceeds 8388608 bytes" }, 413)),
    );
    const api = new ApiClient();

    const err = await api.uploadImage(new Blob(["x"]), "big.png").catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).status).toBe(413);
    expect((err as ApiError).detail).toBe("upload exceeds 8388608 bytes");
  });

  it("falls back to the status code when the error body is not JSON", async () => {
    vi.stubGlobal(
      "fetch",
      vi.fn(async () => new Response("boom", { status: 502 })),
    );
    const api = new ApiClient();

    const err = await api.seeds().catch((e) => e);
    expect((err as ApiError).detail).toBe("request failed with status 502");
  });
});
