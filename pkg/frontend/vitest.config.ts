import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    testTimeout: 30000,
    hookTimeout: 60000,
    // the live gateway file owns a port; keep files sequential
    fileParallelism: false,
  },
});
