"""Builds an on-disk pipeline workspace: data files plus a config pointing at a mock server."""

import json
from pathlib import Path

from ambiscore.synthetic import make_split, to_records


def write_split(path: Path, insts) -> Path:
    path.write_text(json.dumps(to_records(insts), indent=1), encoding="utf-8")
    return path


def make_workspace(root: Path, base_url: str, n_train=150, n_dev=40, **extra) -> dict:
    root.mkdir(parents=True, exist_ok=True)
    train = make_split(n_train, "train", seed=11)
    dev = make_split(n_dev, "dev", seed=12)
    test = make_split(10, "test", seed=13, with_labels=False)
    cfg = {
        "data": {
            "train": str(write_split(root / "train.json", train)),
            "dev": str(write_split(root / "dev.json", dev)),
            "test": str(write_split(root / "test.json", test)),
        },
        "base_url": base_url,
        "chat_model": "mock-chat",
        "embedding_model": "mock-embed",
        "calibration_targets": [int(n_train * 0.47), int(n_train * 0.27), n_train - int(n_train * 0.47)
                                - int(n_train * 0.27)],
        "max_attempts": 2,
        "out": str(root / "out"),
        "cache_dir": str(root / "cache"),
    }
    cfg.update(extra)
    path = root / "config.json"
    path.write_text(json.dumps(cfg, indent=1), encoding="utf-8")
    return {"config": path, "train": train, "dev": dev, "test": test, "out": root / "out", "root": root}


def snapshot(directory: Path) -> dict[str, bytes]:
    return {str(p.relative_to(directory)): p.read_bytes() for p in sorted(directory.rglob("*")) if p.is_file()}
