"""Builds the extension module, imports it and exercises the bindings on
the bundled mini corpus."""

import json
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
FIXTURE = ROOT / "crates" / "core" / "fixtures" / "mini"


def build_module(dest: Path) -> None:
    subprocess.run(
        ["cargo", "build", "-p", "bugport-py", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    target = ROOT / "target" / "debug"
    lib = next(p for p in (target / "libbugport_py.so", target / "libbugport_py.dylib") if p.exists())
    shutil.copy(lib, dest / "bugport_py.so")


def main() -> int:
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        build_module(tmp)
        sys.path.insert(0, str(tmp))
        import bugport_py as bp

        assert bp.jaccard(["a", "b"], ["b", "c"]) == 1 / 3
        assert bp.jaccard([], []) == 0.0
        assert round(bp.trigger_ratio(143, 404), 2) == 35.40
        assert bp.trigger_ratio(0, 0) is None
        assert bp.check_performance("subject_exceeds_baseline", [8.91], [11.79])
        assert bp.check_performance("no_improvement", [40.43], [40.43])
        assert bp.normalize_exception("ValueError", "Conv2d got 3 at 0xff", ["Conv2d"]) == (
            "ValueError",
            "<API> got <N> at <ADDR>",
        )

        corpus = bp.Corpus.load([str(FIXTURE / "corpus.jsonl")])
        assert len(corpus) == len(corpus.apis) >= 12
        assert corpus.filter_arguments("torch.nn.Conv2d", "torch.nn.LazyConv2d")
        assert not corpus.filter_arguments("torch.nn.Conv2d", "torch.nn.LPPool2d")
        groups = [json.loads(l) for l in corpus.cluster_functions().splitlines()]
        pairs = corpus.match_pairs()
        cases, skips = corpus.synthesize_all(pairs)
        cases = [json.loads(l) for l in cases.splitlines()]
        assert groups and cases
        lazy = next(c for c in cases if c["case_id"] == "conv2d-crash@torch.nn.LazyConv2d")
        assert set(lazy["call"]["bound_args"]) == {"out_channels", "kernel_size", "input"}

        out = tmp / "out"
        text = bp.run_pipeline(str(FIXTURE / "bugport.conf"), str(out))
        summary = json.loads(bp.read_report(str(out)))
        assert summary["cases_generated"] == 18 and summary["cases_triggering"] == 9
        print(text)
        print(f"smoke test ok: {len(groups)} groups, {len(cases)} cases")
    return 0


if __name__ == "__main__":
    sys.exit(main())
