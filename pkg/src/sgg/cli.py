"""Command line front end.

Subcommands::

    sgg gen        --out scenes.jsonl [--seed N] [--config FILE]
    sgg train-srf  --data scenes.jsonl --out filter.ckpt [--seed N] [--config FILE]
    sgg train      --data scenes.jsonl --srf-model filter.ckpt --out model.ckpt
                   [--seed N] [--iters N] [--directions LIST] [--no-language]
                   [--no-srf] [--no-prede] [--config FILE]
    sgg eval       --data scenes.jsonl --model model.ckpt --out metrics
                   [--mode sggen|sgcls|predcls|all] [--k 20,50,100]
                   [--iters N] [--directions LIST] [--no-srf] [--workers N]
    sgg predict    --data scenes.jsonl --model model.ckpt [--out FILE]
                   [--mode sggen|sgcls|predcls]
    sgg gradcheck  [--seed N]

Config files hold flat ``key = value`` lines ('#' starts a comment); command
line flags override them.  Every run echoes its effective settings as
``config key = value`` lines.  Exit codes: 0 success, 1 usage or data errors,
2 internal failures.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from .checkpoint import (load_model, load_srf_checkpoint, save_model,
                         save_srf_checkpoint)
from .config import ALL_DIRECTIONS, Dims, ModelConfig
from .evaluation import (MODES, evaluate, format_metrics_kv, format_metrics_table,
                         scene_for_mode)
from .gradcheck import check_all_ops, pipeline_gradient_check
from .inference import format_prediction
from .model import predict_scene
from .scenes import EmbeddingTable, load_scenes, save_scenes
from .synthetic import SynthConfig, generate_dataset
from .training import TrainConfig, train_main, train_srf

GRADCHECK_TOL = 1e-4


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# settings: defaults <- config file <- command line


def read_config_file(path) -> dict[str, str]:
    out = {}
    with open(path) as fh:
        for ln, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}: line {ln}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            if not key or not value:
                raise ValueError(f"{path}: line {ln}: expected 'key = value'")
            out[key] = value
    return out


def merge_settings(defaults: dict[str, str], args) -> dict[str, str]:
    """Layer the config file and flag overrides over per-command defaults."""
    settings = dict(defaults)
    if getattr(args, "config", None):
        for key, value in read_config_file(args.config).items():
            if key not in settings:
                raise ValueError(f"{args.config}: unknown key '{key}'")
            settings[key] = value
    for key in settings:
        flag = getattr(args, key.replace("-", "_"), None)
        if flag is not None:
            settings[key] = flag if isinstance(flag, str) else repr(flag)
    return settings


def _as_int(settings, key) -> int:
    try:
        return int(settings[key])
    except ValueError:
        raise ValueError(f"config {key}: expected an integer, got '{settings[key]}'") from None


def _as_float(settings, key) -> float:
    try:
        return float(settings[key])
    except ValueError:
        raise ValueError(f"config {key}: expected a number, got '{settings[key]}'") from None


def _as_bool(settings, key) -> bool:
    v = settings[key].lower()
    if v in ("true", "1", "yes"):
        return True
    if v in ("false", "0", "no"):
        return False
    raise ValueError(f"config {key}: expected true/false, got '{settings[key]}'")


def parse_directions(text: str) -> frozenset[str]:
    text = text.strip().lower()
    if text == "all":
        return frozenset(ALL_DIRECTIONS)
    if text in ("none", ""):
        return frozenset()
    parts = [p.strip() for p in text.split(",")]
    for p in parts:
        if p not in ALL_DIRECTIONS:
            raise ValueError(f"unknown message direction '{p}' "
                             f"(choose from {', '.join(ALL_DIRECTIONS)})")
    return frozenset(parts)


def format_directions(directions: frozenset[str]) -> str:
    kept = [d for d in ALL_DIRECTIONS if d in directions]
    return ",".join(kept) if kept else "none"


def echo_settings(settings: dict[str, str]) -> None:
    for key, value in settings.items():
        print(f"config {key} = {value}")


# ---------------------------------------------------------------------------
# shared pieces


_DIMS_KEYS = ("d_obj", "d_emb", "d_union", "d_rel", "d_pe", "mask_res",
              "conv1_channels", "conv2_channels")


def _dims_defaults() -> dict[str, str]:
    d = Dims(n_classes=2, n_predicates=1)
    return {key: str(getattr(d, key)) for key in _DIMS_KEYS}


def _dims_from_settings(settings) -> Dims:
    return Dims(n_classes=_as_int(settings, "n_classes"),
                n_predicates=_as_int(settings, "n_predicates"),
                **{key: _as_int(settings, key) for key in _DIMS_KEYS})


def _infer_corpus_shape(scenes) -> dict[str, str]:
    """Dims defaults that can be read off the corpus itself."""
    out = {}
    for s in scenes:
        if s.proposals:
            out["n_classes"] = str(len(s.proposals[0].label_dist))
            out["d_obj"] = str(len(s.proposals[0].feature))
            break
    preds = [t.pred for s in scenes for t in s.gt_triplets]
    if preds:
        out["n_predicates"] = str(max(preds) + 1)
    return out


def _train_config(settings) -> TrainConfig:
    return TrainConfig(epochs=_as_int(settings, "epochs"),
                       lr=_as_float(settings, "lr"),
                       momentum=_as_float(settings, "momentum"),
                       seed=_as_int(settings, "seed"),
                       negative_ratio=_as_float(settings, "negative_ratio"),
                       match_iou=_as_float(settings, "match_iou"))


_TRAIN_DEFAULTS = {"epochs": "15", "lr": repr(5e-3), "momentum": "0.9",
                   "negative_ratio": "3.0", "match_iou": "0.5", "seed": "0"}


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen(args) -> int:
    defaults = {"num_scenes": "100", "min_objects": "3", "max_objects": "6",
                "n_object_classes": "6", "n_predicates": "6",
                "feature_noise": "0.3", "box_jitter": "6.0", "dropout": "0.1",
                "d_obj": "64", "seed": "0", "confusable": "0.0"}
    settings = merge_settings(defaults, args)
    echo_settings(settings)
    cfg = SynthConfig(num_scenes=_as_int(settings, "num_scenes"),
                      min_objects=_as_int(settings, "min_objects"),
                      max_objects=_as_int(settings, "max_objects"),
                      n_object_classes=_as_int(settings, "n_object_classes"),
                      n_predicates=_as_int(settings, "n_predicates"),
                      feature_noise=_as_float(settings, "feature_noise"),
                      box_jitter=_as_float(settings, "box_jitter"),
                      dropout=_as_float(settings, "dropout"),
                      seed=_as_int(settings, "seed"),
                      d_obj=_as_int(settings, "d_obj"),
                      confusable=_as_float(settings, "confusable"))
    scenes = generate_dataset(cfg)
    save_scenes(args.out, scenes)
    print(f"wrote {len(scenes)} scenes to {args.out}")
    return 0


def cmd_train_srf(args) -> int:
    scenes = load_scenes(args.data)
    defaults = dict(_TRAIN_DEFAULTS)
    defaults.update(_dims_defaults())
    defaults.update({"n_classes": "", "n_predicates": ""})
    defaults.update(_infer_corpus_shape(scenes))
    settings = merge_settings(defaults, args)
    for key in ("n_classes", "n_predicates"):
        if not settings[key]:
            raise ValueError(f"cannot infer {key} from {args.data}; set it in the config")
    echo_settings(settings)
    dims = _dims_from_settings(settings)
    embed = EmbeddingTable.seeded(dims.n_classes, dims.d_emb, _as_int(settings, "seed"))
    srf, history = train_srf(scenes, embed, dims, _train_config(settings))
    for epoch, loss in enumerate(history, start=1):
        print(f"epoch {epoch} filter loss {loss:.6f}")
    save_srf_checkpoint(args.out, srf, embed, dims)
    print(f"wrote filter checkpoint to {args.out}")
    return 0


def _model_flag_overrides(config: ModelConfig, args) -> ModelConfig:
    if getattr(args, "iters", None) is not None:
        config = dataclasses.replace(config, iterations=args.iters)
    if getattr(args, "directions", None) is not None:
        config = dataclasses.replace(config, directions=parse_directions(args.directions))
    if getattr(args, "no_srf", False):
        config = dataclasses.replace(config, use_srf=False)
    return config


def cmd_train(args) -> int:
    scenes = load_scenes(args.data)
    srf = embed = None
    if args.srf_model:
        srf, embed, dims = load_srf_checkpoint(args.srf_model)
        dim_defaults = {key: str(getattr(dims, key)) for key in _DIMS_KEYS}
        dim_defaults.update({"n_classes": str(dims.n_classes),
                             "n_predicates": str(dims.n_predicates)})
    elif not args.no_srf:
        raise ValueError("train: pass --srf-model, or --no-srf to skip pair filtering")
    else:
        dim_defaults = _dims_defaults()
        dim_defaults.update({"n_classes": "", "n_predicates": ""})
        dim_defaults.update(_infer_corpus_shape(scenes))

    defaults = dict(_TRAIN_DEFAULTS)
    defaults.update(dim_defaults)
    defaults.update({"iterations": "2", "directions": "all", "use_language": "true",
                     "use_prede": "true", "srf_top_k": "128",
                     "srf_threshold": "0.55", "srf_in_predcls": "false"})
    settings = merge_settings(defaults, args)
    for key in ("n_classes", "n_predicates"):
        if not settings[key]:
            raise ValueError(f"cannot infer {key} from {args.data}; set it in the config")
    if args.iters is not None:
        settings["iterations"] = str(args.iters)
    settings["directions"] = format_directions(parse_directions(settings["directions"]))
    if args.no_language:
        settings["use_language"] = "false"
    if args.no_prede:
        settings["use_prede"] = "false"
    settings["use_srf"] = "false" if args.no_srf else str(srf is not None).lower()
    echo_settings(settings)

    config = ModelConfig(dims=_dims_from_settings(settings),
                         iterations=_as_int(settings, "iterations"),
                         directions=parse_directions(settings["directions"]),
                         use_language=_as_bool(settings, "use_language"),
                         use_prede=_as_bool(settings, "use_prede"),
                         use_srf=_as_bool(settings, "use_srf"),
                         srf_top_k=_as_int(settings, "srf_top_k"),
                         srf_threshold=_as_float(settings, "srf_threshold"),
                         srf_in_predcls=_as_bool(settings, "srf_in_predcls"))
    if embed is None:
        embed = EmbeddingTable.seeded(config.dims.n_classes, config.dims.d_emb,
                                      _as_int(settings, "seed"))
    params, history = train_main(scenes, config, _train_config(settings),
                                 srf=srf, embed=embed)
    for epoch, loss in enumerate(history, start=1):
        print(f"epoch {epoch} loss {loss:.6f}")
    save_model(args.out, params, config)
    print(f"wrote model checkpoint to {args.out}")
    return 0


def _parse_ks(text: str) -> tuple[int, ...]:
    try:
        ks = tuple(int(p.strip()) for p in text.split(","))
    except ValueError:
        raise ValueError(f"--k: expected comma-separated integers, got '{text}'") from None
    if not ks or any(k < 1 for k in ks):
        raise ValueError("--k: cutoffs must be positive")
    return ks


def cmd_eval(args) -> int:
    scenes = load_scenes(args.data)
    params, config = load_model(args.model)
    config = _model_flag_overrides(config, args)
    modes = MODES if args.mode == "all" else (args.mode,)
    ks = _parse_ks(args.k)
    echo_settings({"iterations": str(config.iterations),
                   "directions": format_directions(config.directions),
                   "use_language": str(config.use_language).lower(),
                   "use_prede": str(config.use_prede).lower(),
                   "use_srf": str(config.use_srf).lower(),
                   "mode": args.mode, "k": ",".join(str(k) for k in ks),
                   "workers": str(args.workers)})
    result = evaluate(scenes, params, config, modes=modes, ks=ks, workers=args.workers)
    with open(args.out, "w") as fh:
        fh.write(format_metrics_kv(result))
    table = format_metrics_table(result)
    with open(args.out + ".txt", "w") as fh:
        fh.write(table + "\n")
    print(table)
    print(f"wrote metrics to {args.out}")
    return 0


def cmd_predict(args) -> int:
    scenes = load_scenes(args.data)
    params, config = load_model(args.model)
    config = _model_flag_overrides(config, args)
    echo_settings({"mode": args.mode,
                   "directions": format_directions(config.directions)})
    chunks = []
    for scene in scenes:
        graph = predict_scene(scene_for_mode(scene, args.mode, config), params,
                              config, args.mode)
        chunks.append(format_prediction(scene.id, graph))
    text = "\n".join(chunks) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        print(f"wrote predictions for {len(scenes)} scenes to {args.out}")
    else:
        print(text, end="")
    return 0


def cmd_gradcheck(args) -> int:
    seed = args.seed if args.seed is not None else 0
    errs = check_all_ops(seed)
    for name in sorted(errs):
        print(f"op {name} max_rel_err = {errs[name]:.3e}")
    pipeline_err = pipeline_gradient_check(seed)
    print(f"pipeline max_rel_err = {pipeline_err:.3e}")
    if all(v < GRADCHECK_TOL for v in errs.values()) and pipeline_err < GRADCHECK_TOL:
        print("gradient check passed")
        return 0
    print("gradient check FAILED")
    return 1


# ---------------------------------------------------------------------------
# parser


def build_parser() -> _Parser:
    parser = _Parser(prog="sgg", description="scene graph generation pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=False, model=False, srf_model=False, out=False):
        if data:
            p.add_argument("--data", required=True, help="scene corpus (JSONL)")
        if model:
            p.add_argument("--model", required=True, help="model checkpoint")
        if srf_model:
            p.add_argument("--srf-model", help="relation filter checkpoint")
        if out:
            p.add_argument("--out", required=True, help="output path")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--config", help="flat 'key = value' settings file")

    p = sub.add_parser("gen", help="synthesize a scene corpus")
    common(p, out=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train-srf", help="fit the relation filter")
    common(p, data=True, out=True)
    p.set_defaults(func=cmd_train_srf)

    p = sub.add_parser("train", help="fit the full model")
    common(p, data=True, srf_model=True, out=True)
    p.add_argument("--iters", type=int, default=None, help="message passing iterations")
    p.add_argument("--directions", default=None,
                   help="message directions: 'all', 'none', or a comma list of "
                        "oo,ro,or,rr")
    p.add_argument("--no-language", action="store_true",
                   help="drop label embeddings from object-to-object messages")
    p.add_argument("--no-srf", action="store_true",
                   help="keep all confident pairs instead of the learned filter")
    p.add_argument("--no-prede", action="store_true",
                   help="classify relations without subject/object label embeddings")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="recall@K and mAP metrics")
    common(p, data=True, model=True, out=True)
    p.add_argument("--mode", choices=MODES + ("all",), default="all")
    p.add_argument("--k", default="20,50,100", help="comma list of recall cutoffs")
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--directions", default=None)
    p.add_argument("--no-srf", action="store_true")
    p.add_argument("--workers", type=int, default=1, help="evaluation threads")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="write formatted scene graphs")
    common(p, data=True, model=True)
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--mode", choices=MODES, default="sggen")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def run(argv=None) -> int:
    """Parse and dispatch; returns the process exit code."""
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001 -- boundary: map anything else to exit 2
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


def console_entry() -> None:
    sys.exit(run())


if __name__ == "__main__":
    console_entry()
