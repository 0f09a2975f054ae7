import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    // every binding call shells out to the pipeline, so allow for
    // interpreter startup on slow machines
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
