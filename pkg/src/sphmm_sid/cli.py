"""Command-line entry point: synth, train, evaluate, features."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .corpus import load_manifest, read_wav, synth_corpus
from .frontend import analyze, write_features
from .recognizer import MODELS, ModelConfig, enroll_manifest, evaluate, iter_test_items
from .serialize import load_registry, save_registry
from .sphmm import FusionWeight

PROG = "sphmm-sid"


@dataclass
class RunConfig:
    """Settings shared by all subcommands; flags override a config file."""

    n_states: int = 9
    mixtures_acoustic: int = 5
    mixtures_supra: int = 10
    alpha: float = 0.5
    seed: int = 0
    model: str = "both"
    speakers: int = 30
    sentences: int = 8
    separation: float = 1.0
    max_iter: int = 50
    tol: float = 1e-4
    out: str = ""

    def __post_init__(self):
        FusionWeight(self.alpha)
        if self.model not in MODELS + ("both",):
            raise ValueError(f"--model must be one of chmm2, sphmm, both (got {self.model!r})")
        if self.n_states < 3:
            raise ValueError("--states must be at least 3")
        if self.mixtures_acoustic < 1 or self.mixtures_supra < 1:
            raise ValueError("mixture counts must be positive")

    def model_config(self) -> ModelConfig:
        return ModelConfig(n_states=self.n_states, mixtures_acoustic=self.mixtures_acoustic,
                           mixtures_supra=self.mixtures_supra, alpha=self.alpha, seed=self.seed,
                           max_iter=self.max_iter, tol=self.tol)

    def models(self):
        return MODELS if self.model == "both" else (self.model,)


DEFAULTS = RunConfig()

# (flag, RunConfig field, type, help)
_COMMON = [
    ("--seed", "seed", int, "master random seed"),
    ("--states", "n_states", int, "acoustic states per CHMM2"),
    ("--mixtures", "mixtures_acoustic", int, "Gaussian components per acoustic state"),
    ("--supra-mixtures", "mixtures_supra", int, "Gaussian components per supra-state"),
    ("--alpha", "alpha", float, "fusion weight of the supra score"),
    ("--model", "model", str, "identifier to evaluate: chmm2, sphmm or both"),
    ("--max-iter", "max_iter", int, "Baum-Welch iteration cap"),
    ("--tol", "tol", float, "Baum-Welch log-likelihood tolerance"),
    ("--speakers", "speakers", int, "number of synthetic speakers"),
    ("--sentences", "sentences", int, "number of synthetic sentences"),
    ("--separation", "separation", float, "speaker separation of the synthetic voices"),
    ("--out", "out", str, "output directory (feature file for 'features')"),
]


def _parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=None,
                   help="JSON file with RunConfig fields; flags override it (default: none)")
    for flag, name, typ, text in _COMMON:
        default = getattr(DEFAULTS, name)
        shown = repr(default) if isinstance(default, str) else default
        p.add_argument(flag, dest=name, type=typ, default=None,
                       help=f"{text} (default: {shown})")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress (default: off)")
    return p


def build_parser() -> argparse.ArgumentParser:
    parent = _parent()
    parser = argparse.ArgumentParser(
        prog=PROG, description="Text-dependent speaker identification with CHMM2 and SPHMM.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    s = sub.add_parser("synth", parents=[parent], help="render the seeded synthetic corpus")
    s.set_defaults(func=cmd_synth)
    t = sub.add_parser("train", parents=[parent], help="train one model bundle per "
                       "(speaker, sentence) from the training session")
    t.add_argument("manifest", help="corpus manifest.tsv")
    t.set_defaults(func=cmd_train)
    e = sub.add_parser("evaluate", parents=[parent], help="score the test session and "
                       "write report.txt / report.json")
    e.add_argument("manifest", help="corpus manifest.tsv")
    e.add_argument("models_dir", help="model store written by 'train'")
    e.set_defaults(func=cmd_evaluate)
    f = sub.add_parser("features", parents=[parent], help="dump features of one WAV file")
    f.add_argument("wav", help="16-bit mono 12 kHz WAV file")
    f.set_defaults(func=cmd_features)
    return parser


def resolve_config(args) -> RunConfig:
    values = {}
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValueError(f"{args.config}: invalid JSON ({exc})") from None
        known = {f.name for f in fields(RunConfig)}
        unknown = sorted(set(loaded) - known)
        if unknown:
            raise ValueError(f"{args.config}: unknown config keys {unknown}")
        values.update(loaded)
    for _, name, _, _ in _COMMON:
        if getattr(args, name) is not None:
            values[name] = getattr(args, name)
    return RunConfig(**values)


def cmd_synth(cfg: RunConfig, args) -> int:
    if not cfg.out:
        raise ValueError("synth needs --out DIR")
    manifest = synth_corpus(cfg.out, cfg.speakers, cfg.sentences, cfg.seed, cfg.separation)
    print(f"wrote {len(manifest.records)} utterances "
          f"({len(manifest.select(session='train'))} train, "
          f"{len(manifest.select(session='test'))} test) to {cfg.out}")
    return 0


def cmd_train(cfg: RunConfig, args) -> int:
    if not cfg.out:
        raise ValueError("train needs --out DIR")
    manifest = load_manifest(args.manifest)

    def report(bundle):
        print(f"speaker {bundle.speaker:3d} sentence {bundle.sentence}: "
              f"final log-likelihood {bundle.train_log_likelihood:.6f}", flush=True)

    registry = enroll_manifest(manifest, cfg.model_config(), progress=report)
    save_registry(registry, cfg.out, asdict(cfg.model_config()))
    print(f"{len(registry)} model bundles written to {cfg.out}")
    return 0


def cmd_evaluate(cfg: RunConfig, args) -> int:
    if not cfg.out:
        raise ValueError("evaluate needs --out DIR")
    manifest = load_manifest(args.manifest)
    registry, _ = load_registry(args.models_dir)
    report = evaluate(registry, iter_test_items(manifest), cfg.alpha, cfg.models())
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    text = report.to_text()
    (out / "report.txt").write_text(text, encoding="utf-8")
    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    print(text, end="")
    return 0


def cmd_features(cfg: RunConfig, args) -> int:
    obs, prosody = analyze(read_wav(args.wav))
    voiced = prosody.f0_hz[prosody.f0_hz > 0]
    print(f"frames kept: {len(obs)}  dropped: {obs.n_dropped}  dim: {obs.dim}")
    print(f"voiced frames: {len(voiced)}")
    if len(voiced):
        print(f"f0 Hz: mean {voiced.mean():.2f}  median {np.median(voiced):.2f}  "
              f"min {voiced.min():.2f}  max {voiced.max():.2f}")
    print(f"log energy: mean {prosody.log_energy.mean():.4f}  "
          f"min {prosody.log_energy.min():.4f}  max {prosody.log_energy.max():.4f}")
    if cfg.out:
        write_features(cfg.out, obs)
        print(f"features written to {cfg.out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return args.func(cfg, args)
    except (ValueError, OSError, KeyError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"{PROG}: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
