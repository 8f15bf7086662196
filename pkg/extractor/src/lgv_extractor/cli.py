"""Command-line entry point: extract one language's vector from one model.

Model identifiers resolve through a local registry first (used by tests and
toy setups) and otherwise through Hugging Face `transformers`. Corpus
identifiers name a directory of <language>.txt files.
"""

from __future__ import annotations

import argparse
import sys
from typing import Callable

from torch import nn

from . import __version__
from .capture import capture_and_score
from .errors import ExtractionError
from .job import ExtractionJob
from .sampling import DirectoryCorpus, byte_tokenizer, sample_calibration

_MODEL_REGISTRY: dict[str, Callable[[], tuple[nn.Module, Callable]]] = {}


def register_model(name: str, factory: Callable[[], tuple[nn.Module, Callable]]) -> None:
    """Register a local model: factory returns (module, tokenizer)."""
    _MODEL_REGISTRY[name] = factory


def resolve_model(model_id: str):
    if model_id in _MODEL_REGISTRY:
        return _MODEL_REGISTRY[model_id]()
    try:
        from transformers import AutoModelForCausalLM, AutoTokenizer
    except ImportError as exc:
        raise ExtractionError(
            f"model {model_id!r} is not registered locally and transformers "
            f"is unavailable: {exc}"
        ) from exc
    model = AutoModelForCausalLM.from_pretrained(model_id)
    tokenizer = AutoTokenizer.from_pretrained(model_id)
    return model, lambda text: tokenizer(text, add_special_tokens=False)["input_ids"]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="lgv-extract", description=__doc__)
    parser.add_argument("--version", action="version", version=f"lgv-extract {__version__}")
    parser.add_argument("--model", required=True, help="model identifier")
    parser.add_argument("--corpus", required=True, help="directory of <lang>.txt files")
    parser.add_argument("--language", required=True)
    parser.add_argument("--output", required=True, help="output .lgv path")
    parser.add_argument("--token-budget", type=int, default=2**19)
    parser.add_argument("--sequence-length", type=int, default=2048)
    parser.add_argument("--batch-size", type=int, default=8)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument(
        "--include",
        action="append",
        default=None,
        help="substring filter for targeted linear sub-layers (repeatable)",
    )
    parser.add_argument("--rho", type=float, default=0.01, help="relative damping")
    parser.add_argument("--damping-lambda", type=float, default=None)
    parser.add_argument(
        "--dump-wx",
        type=int,
        default=None,
        metavar="LAYER",
        help="also export this layer's (W, X) pair as a .npz container",
    )
    parser.add_argument("--dump-wx-path", default=None)
    args = parser.parse_args(argv)

    try:
        job = ExtractionJob(
            model_id=args.model,
            corpus_id=args.corpus,
            language=args.language,
            output_path=args.output,
            token_budget=args.token_budget,
            sequence_length=args.sequence_length,
            batch_size=args.batch_size,
            seed=args.seed,
        )
        model, tokenizer = resolve_model(args.model)
        corpus = DirectoryCorpus(args.corpus)
        batches = sample_calibration(job, corpus, tokenizer)
        result = capture_and_score(
            job,
            batches,
            model,
            include=args.include,
            damping_factor=args.rho,
            damping_absolute=args.damping_lambda,
            dump_wx_layer=args.dump_wx,
            dump_wx_path=args.dump_wx_path,
        )
    except ExtractionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    total_bits = sum(bits.size for _, bits in result.bits_per_layer)
    print(
        f"{args.language}: {len(result.layer_names)} layers, {total_bits} bits "
        f"-> {args.output}"
    )
    return 0


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
