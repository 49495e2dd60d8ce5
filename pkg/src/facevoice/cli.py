"""Thin command-line client for the facevoice service.

Each subcommand serializes its flags into a service request. With --server (or
FACEVOICE_SERVER set) requests go to a running instance over HTTP; otherwise
the service app runs embedded in this process, so the CLI works standalone
while going through the same endpoints and validation either way.

Precedence for request fields: built-in defaults < --config JSON file <
explicit flags. FACEVOICE_OUT sets the root for default output directories.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Any

SERVER_ENV = "FACEVOICE_SERVER"
OUT_ENV = "FACEVOICE_OUT"


class CliError(Exception):
    pass


class ServiceClient:
    """POSTs requests either to a remote server or to an embedded app."""

    def __init__(self, server: str | None):
        if server:
            import httpx

            self._client = httpx.Client(base_url=server, timeout=None)
        else:
            from starlette.testclient import TestClient

            from .service import create_app

            self._client = TestClient(create_app(), raise_server_exceptions=False)

    def post(self, path: str, payload: dict[str, Any]) -> dict[str, Any]:
        response = self._client.post(path, json=payload)
        if response.status_code >= 300:
            try:
                detail = response.json().get("detail", response.text)
            except ValueError:
                detail = response.text
            raise CliError(f"{path} failed ({response.status_code}): {detail}")
        return response.json()


def _parse_int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated ints, got {text!r}") from exc


def _parse_float_list(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip() != ""]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated floats, got {text!r}") from exc


def _parse_str_list(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip() != ""]


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--server", default=os.environ.get(SERVER_ENV), help="service URL; embedded app when unset")
    parser.add_argument("--config", default=None, help="JSON file with request fields (flags override)")
    parser.add_argument("--out", default=None, help="output directory (default: $FACEVOICE_OUT/<command>)")


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", default=None, help="dataset directory")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--epochs", type=int, default=None)
    parser.add_argument("--batch-size", type=int, default=None)
    parser.add_argument("--lr", type=float, default=None, help="initial learning rate")
    parser.add_argument("--decay", type=float, default=None, help="per-epoch lr decay factor")
    parser.add_argument("--alpha", type=float, default=None, help="pair-loss weight")
    parser.add_argument("--variant", default=None, choices=["CE", "MSM", "FOP", "OURS"])
    parser.add_argument("--embed-dim", type=int, default=None)
    parser.add_argument("--dropout", type=float, default=None)
    parser.add_argument("--split-mode", default=None, choices=["seen_heard", "unseen_unheard"])
    parser.add_argument("--split-ratios", type=_parse_float_list, default=None, metavar="TR,VA,TE")
    parser.add_argument("--split-seed", type=int, default=None)
    parser.add_argument("--tag", default=None, help="restrict to records with this tag")
    parser.add_argument("--n-valid-trials", type=int, default=None)
    parser.add_argument("--n-verify-trials", type=int, default=None)
    parser.add_argument("--gallery-sizes", type=_parse_int_list, default=None, metavar="N1,N2,...")
    parser.add_argument("--n-match-trials", type=int, default=None)
    parser.add_argument("--probe-modality", default=None, choices=["face", "voice"])


_RUN_FLAG_FIELDS = {
    "data": "dataset_dir",
    "seed": "seed",
    "epochs": "epochs",
    "batch_size": "batch_size",
    "lr": "base_lr",
    "decay": "decay_rate",
    "alpha": "alpha",
    "variant": "variant",
    "embed_dim": "embed_dim",
    "dropout": "dropout_rate",
    "split_mode": "split_mode",
    "split_ratios": "split_ratios",
    "split_seed": "split_seed",
    "tag": "tag",
    "n_valid_trials": "n_valid_trials",
    "n_verify_trials": "n_verify_trials",
    "gallery_sizes": "gallery_sizes",
    "n_match_trials": "n_match_trials",
    "probe_modality": "probe_modality",
}


def _load_config_file(path: str | None) -> dict[str, Any]:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read config file {path}: {exc}")
    if not isinstance(doc, dict):
        raise CliError(f"config file {path} must hold a JSON object")
    return doc


def _resolve_out(args, command: str) -> str:
    if args.out is not None:
        return args.out
    root = os.environ.get(OUT_ENV, "runs")
    return str(Path(root) / command)


def _request_from_flags(args, command: str, flag_fields: dict[str, str]) -> dict[str, Any]:
    payload = _load_config_file(args.config)
    for flag, fieldname in flag_fields.items():
        value = getattr(args, flag, None)
        if value is not None:
            payload[fieldname] = value
    payload["out_dir"] = payload.get("out_dir") if args.out is None else args.out
    if payload.get("out_dir") is None:
        payload["out_dir"] = _resolve_out(args, command)
    return payload


def _print_outputs(doc: dict[str, Any]) -> None:
    for path in doc.get("outputs", []):
        print(f"wrote {path}")


def cmd_gen(args) -> int:
    client = ServiceClient(args.server)
    fields = {
        "n_speakers": "n_speakers",
        "instances_per_speaker": "instances_per_speaker",
        "latent_dim": "latent_dim",
        "face_dim": "face_dim",
        "voice_dim": "voice_dim",
        "sigma": "noise_sigma",
        "seed": "seed",
        "tag": "tag",
    }
    payload = _request_from_flags(args, "gen", fields)
    doc = client.post("/datasets/generate", payload)
    print(f"dataset {doc['dataset_dir']}: {doc['n_records']} records, "
          f"{doc['n_speakers']} speakers")
    print(f"digest {doc['dataset_digest']}")
    _print_outputs(doc)
    return 0


def cmd_train(args) -> int:
    client = ServiceClient(args.server)
    payload = _request_from_flags(args, "train", _RUN_FLAG_FIELDS)
    doc = client.post("/runs/train", payload)
    best = doc.get("best_valid_eer")
    best_txt = "n/a" if best is None else f"{best:.4f}"
    print(f"trained: best epoch {doc.get('best_epoch')}, valid EER {best_txt}")
    _print_outputs(doc)
    return 0


def cmd_eval_verify(args) -> int:
    client = ServiceClient(args.server)
    fields = {
        "checkpoint": "checkpoint_path",
        "data": "dataset_dir",
        "trials": "trials_path",
        "split_mode": "split_mode",
        "split_ratios": "split_ratios",
        "split_seed": "split_seed",
        "tag": "tag",
        "n_trials": "n_trials",
        "trial_seed": "trial_seed",
    }
    payload = _request_from_flags(args, "eval-verify", fields)
    doc = client.post("/runs/eval-verify", payload)
    print(f"EER {doc['eer']:.4f}  AUC {doc['auc']:.4f}  threshold {doc['eer_threshold']:.4f} "
          f"({doc['n_trials']} trials)")
    _print_outputs(doc)
    return 0


def cmd_eval_match(args) -> int:
    client = ServiceClient(args.server)
    fields = {
        "checkpoint": "checkpoint_path",
        "data": "dataset_dir",
        "trials": "trials_path",
        "split_mode": "split_mode",
        "split_ratios": "split_ratios",
        "split_seed": "split_seed",
        "tag": "tag",
        "gallery_sizes": "gallery_sizes",
        "n_trials": "n_trials",
        "trial_seed": "trial_seed",
        "probe_modality": "probe_modality",
    }
    payload = _request_from_flags(args, "eval-match", fields)
    doc = client.post("/runs/eval-match", payload)
    for n_c, acc in sorted(doc["accuracy_by_gallery_size"].items(), key=lambda kv: int(kv[0])):
        print(f"n_c={n_c}: accuracy {acc:.4f}")
    _print_outputs(doc)
    return 0


def cmd_ablate(args) -> int:
    client = ServiceClient(args.server)
    payload = _request_from_flags(args, "ablate", _RUN_FLAG_FIELDS)
    if args.variants is not None:
        payload["variants"] = args.variants
    if args.seeds is not None:
        payload["seeds"] = args.seeds
    doc = client.post("/runs/ablate", payload)
    for cell in doc["cells"]:
        print(f"{cell['variant']:4s} seed {cell['seed']}: EER {cell['eer']:.4f} AUC {cell['auc']:.4f}")
    _print_outputs(doc)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="facevoice",
        description="Face-voice association: synthetic data, training, evaluation, serving.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic embedding dataset")
    _add_common(p)
    p.add_argument("--n-speakers", type=int, default=None)
    p.add_argument("--instances-per-speaker", type=int, default=None)
    p.add_argument("--latent-dim", type=int, default=None)
    p.add_argument("--face-dim", type=int, default=None)
    p.add_argument("--voice-dim", type=int, default=None)
    p.add_argument("--sigma", type=float, default=None, help="noise-to-signal ratio")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--tag", default=None)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a model and write checkpoint + history")
    _add_common(p)
    _add_run_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval-verify", help="verification metrics for a checkpoint")
    _add_common(p)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--data", default=None)
    p.add_argument("--trials", default=None, help="verification trial CSV (built from the test split when omitted)")
    p.add_argument("--split-mode", default=None, choices=["seen_heard", "unseen_unheard"])
    p.add_argument("--split-ratios", type=_parse_float_list, default=None)
    p.add_argument("--split-seed", type=int, default=None)
    p.add_argument("--tag", default=None)
    p.add_argument("--n-trials", type=int, default=None)
    p.add_argument("--trial-seed", type=int, default=None)
    p.set_defaults(func=cmd_eval_verify)

    p = sub.add_parser("eval-match", help="matching accuracy curve for a checkpoint")
    _add_common(p)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--data", default=None)
    p.add_argument("--trials", default=None, help="matching trial JSONL (built per gallery size when omitted)")
    p.add_argument("--split-mode", default=None, choices=["seen_heard", "unseen_unheard"])
    p.add_argument("--split-ratios", type=_parse_float_list, default=None)
    p.add_argument("--split-seed", type=int, default=None)
    p.add_argument("--tag", default=None)
    p.add_argument("--gallery-sizes", type=_parse_int_list, default=None)
    p.add_argument("--n-trials", type=int, default=None)
    p.add_argument("--trial-seed", type=int, default=None)
    p.add_argument("--probe-modality", default=None, choices=["face", "voice"])
    p.set_defaults(func=cmd_eval_match)

    p = sub.add_parser("ablate", help="train and evaluate a variant x seed grid")
    _add_common(p)
    _add_run_flags(p)
    p.add_argument("--variants", type=_parse_str_list, default=None, metavar="V1,V2,...")
    p.add_argument("--seeds", type=_parse_int_list, default=None, metavar="S1,S2,...")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
