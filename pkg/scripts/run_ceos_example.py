"""Run the full search on the bundled CEO graph and print the top aggregates."""
import argparse
import sys

from rdfinsight.cli import main
from rdfinsight.graph_store import load_ntriples
from rdfinsight.config import RunConfig
from rdfinsight.pipeline import Pipeline

from importlib import resources

CEOS = str(resources.files("rdfinsight") / "data" / "ceos.nt")


def run(k: int, h: str) -> None:
    store = load_ntriples(CEOS)
    out = Pipeline(store, RunConfig(k=k, h=h, early_stop=False, threads=1)).run()
    print(f"{out.n_specs} aggregates enumerated, {len(out.scores)} scorable")
    for rank, s in enumerate(out.best, 1):
        spec = out.manager.specs[s.key]
        print(f"{rank:2d}. {s.value:12.4g}  {spec.label}")
        for dims, v in out.manager.result(s.key).rows():
            print("      ", ", ".join(d[0].rsplit("/", 1)[-1] for d in dims), "->", v)


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("-k", type=int, default=5)
    ap.add_argument("--h", default="variance")
    ap.add_argument("--out", help="also write the CLI report to this directory")
    a = ap.parse_args()
    run(a.k, a.h)
    if a.out:
        sys.exit(main(["explore", CEOS, "--out", a.out, "-k", str(a.k), "--h", a.h]))
