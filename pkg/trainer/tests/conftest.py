"""Shared fixtures: benchmark artifacts produced by the upstream pipeline CLI.

The trainer consumes the upstream component only through its exported files
and command-line interface, so fixtures shell out to `ehrkg` rather than
importing it.
"""

import json
import subprocess
from pathlib import Path

import pytest

VECTORS_DIR = Path(__file__).parent / "vectors"


def run_pipeline(root: Path, synth_config: dict) -> dict:
    """Drive generate -> stats -> filter -> prompt -> infer/enrich -> build
    and return the artifact paths."""
    def run(*args):
        result = subprocess.run(["ehrkg", *args], capture_output=True, text=True)
        assert result.returncode == 0, result.stderr or result.stdout

    cfg_path = root / "synth.json"
    cfg_path.write_text(json.dumps(synth_config))
    data = root / "data"
    run("generate", "--config", str(cfg_path), "--out-dir", str(data))
    run("stats", "--cohort", str(data / "cohort.jsonl"),
        "--out", str(root / "evidence.jsonl"))
    run("filter", "--evidence", str(root / "evidence.jsonl"),
        "--out", str(root / "candidates.jsonl"))
    run("prompt", "--candidates", str(root / "candidates.jsonl"),
        "--vocab", str(data / "vocab.csv"), "--out", str(root / "prompts.jsonl"))
    gw = root / "gateway.json"
    gw.write_text(json.dumps({
        "mode": "mock", "cache_dir": str(root / "cache"),
        "truth_path": str(data / "planted_truth.json")}))
    run("infer", "--prompts", str(root / "prompts.jsonl"),
        "--config", str(gw), "--out", str(root / "judgments.jsonl"))
    run("enrich", "--prompts", str(root / "prompts.jsonl"),
        "--config", str(gw), "--out", str(root / "descriptions.jsonl"))
    run("build", "--candidates", str(root / "candidates.jsonl"),
        "--judgments", str(root / "judgments.jsonl"),
        "--descriptions", str(root / "descriptions.jsonl"),
        "--vocab", str(data / "vocab.csv"), "--out-dir", str(root / "kg"))
    return {"cohort": data / "cohort.jsonl", "vocab": data / "vocab.csv",
            "truth": data / "planted_truth.json", "kg": root / "kg"}


def transition_benchmark_config(n_patients=800, n_dx=120, n_rules=30,
                                seed=11) -> dict:
    """dx-only cohort with planted dx -> dx transition structure at
    strength 0.8."""
    rules = [{"src": f"dx:DX_{2*i:03d}", "tgt": f"dx:DX_{2*i+1:03d}",
              "channel": "transition", "strength": 0.8,
              "relation": "leads_to" if i % 2 else "causes"}
             for i in range(n_rules)]
    return {"n_patients": n_patients, "min_visits": 4, "max_visits": 6,
            "vocab_sizes": {"dx": n_dx, "rx": 1, "px": 1},
            "background_prob": 0.03, "rules": rules, "seed": seed}


@pytest.fixture(scope="session")
def small_artifacts(tmp_path_factory):
    """A quick-to-build KG with mixed code types for unit-level tests."""
    root = tmp_path_factory.mktemp("small")
    cfg = transition_benchmark_config(n_patients=400, n_dx=30, n_rules=8)
    cfg["vocab_sizes"] = {"dx": 30, "rx": 10, "px": 8}
    return run_pipeline(root, cfg)


@pytest.fixture(scope="session")
def benchmark_artifacts(tmp_path_factory):
    """The desk-scale benchmark used by the acceptance comparisons."""
    root = tmp_path_factory.mktemp("benchmark")
    return run_pipeline(root, transition_benchmark_config())
