/**
 * Write the shared round-trip fixture files under fixtures/.
 *
 * The files are checked in; tests on both sides of the segments-file
 * interface consume them, and a test here fails if the committed files
 * drift from what the session code produces.
 */

import { mkdirSync, writeFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { buildFixtureScene, runScriptedSession } from "../src/fixture.js";
import { serializeSegmentsFile } from "../src/segments.js";

const here = dirname(fileURLToPath(import.meta.url));
const fixtures = join(here, "..", "..", "fixtures");
mkdirSync(fixtures, { recursive: true });

const scene = buildFixtureScene();
const { file, shading } = runScriptedSession();

writeFileSync(join(fixtures, "fixture_scene.json"), JSON.stringify(scene) + "\n");
writeFileSync(join(fixtures, "scripted_session.segments.json"), serializeSegmentsFile(file));
writeFileSync(
  join(fixtures, "scripted_session.shading.json"),
  JSON.stringify(shading, null, 2) + "\n",
);
console.log(`wrote 3 fixture files to ${fixtures}`);
