"""Run configuration: one flat key-value record shared by the CLI, the
training loop, and the service. The on-disk format is plain text, one
``key = value`` pair per line; ``#`` starts a comment."""

from __future__ import annotations

from dataclasses import dataclass, asdict, fields

VARIANTS = ("plain", "cvae", "dlvgen")


@dataclass
class Config:
    variant: str = "dlvgen"
    d_latent: int = 16
    d_model: int = 64
    layers: int = 2
    heads: int = 2
    d_ff: int = 256
    vocab_size: int = 1000
    max_len: int = 128
    lr: float = 1e-4
    batch: int = 16
    epochs: int = 20
    lambda_r: float = 0.5
    lambda_p: float = 1.0
    kl_warmup_epochs: float = 2.0
    h: float = 0.72
    w: int = 4
    n_candidates: int = 3
    beam: int = 3
    max_gen_len: int = 32
    seed: int = 0
    n_personas: int = 20
    n_dialogues: int = 2000
    # paths
    corpus_dir: str = "runs/corpus"
    checkpoint: str = "runs/model.ckpt"
    vocab_path: str = "runs/vocab.txt"
    log_path: str = "runs/train.log"
    report_path: str = "runs/report"
    host: str = "127.0.0.1"
    port: int = 8077

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise KeyError(f"unknown config keys: {sorted(unknown)}")
        coerced = {f.name: _coerce(d[f.name], f.default) for f in fields(cls) if f.name in d}
        return cls(**coerced)


def _coerce(value, default):
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return str(value)


def load_config(path) -> Config:
    d = {}
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, _, val = line.partition("=")
            d[key.strip()] = val.strip()
    return Config.from_dict(d)


def save_config(cfg: Config, path):
    with open(path, "w", encoding="utf-8") as f:
        for key, val in cfg.to_dict().items():
            f.write(f"{key} = {val}\n")
