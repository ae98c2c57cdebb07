"""Regenerate the CSV files used by docs/example_config.json.

    python docs/make_synthetic_data.py
"""
import json
from pathlib import Path

from sexismkit.synthetic import external_hierarchy, make_corpus, make_external_pool

HERE = Path(__file__).parent / "data"


def main():
    HERE.mkdir(exist_ok=True)
    make_corpus(1200, seed=1, source="edos", name="train", label_noise=0.08).to_csv(HERE / "train.csv")
    make_corpus(400, seed=2, source="edos", name="dev", id_prefix="dev", label_noise=0.08).to_csv(HERE / "dev.csv")
    make_corpus(1400, seed=3, sexist_fraction=0.65, source="external", name="external", id_prefix="ext",
                decorate=True, label_tasks=("A",), label_noise=0.08).to_csv(HERE / "external.csv")
    make_external_pool(400, seed=4, name="pool").to_csv(HERE / "pool.csv", tasks=("A", "B"))
    (HERE / "external_hierarchy.json").write_text(json.dumps(external_hierarchy().to_dict(), indent=2) + "\n")


if __name__ == "__main__":
    main()
