"""Command-line front end: gendata | train | eval | predict | gmad.

Configuration comes from an INI file with sections [data], [split], [train]
and [eval]; every value can be overridden on the command line with
``--set section.key=value``. ``--seed`` overrides both the split and the
training seed. Exit codes: 0 success, 1 usage problems, 2 missing or
malformed data, 3 numerical divergence.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from dataclasses import fields
from pathlib import Path

from .autodiff import NonFiniteError
from .datasets import (DataFormatError, GeneratorConfig, SplitSpec, generate,
                       load_dataset, save_dataset, split_records, write_provenance)
from .evaluation import (SessionResult, evaluate_model, gmad_pairs, run_sessions,
                         write_gmad_csv, write_session_csv)
from .labels import UnknownWordError
from .training import (TrainConfig, TrainingDivergedError, load_checkpoint,
                       predict_batch, predict_rows, save_checkpoint, train)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # keep argparse from calling sys.exit(2)
        raise UsageError(message)


# -- configuration ---------------------------------------------------------------


def default_config() -> dict[str, dict[str, str]]:
    gen = GeneratorConfig()
    data = {f.name: str(getattr(gen, f.name)) for f in fields(gen)}
    data["files"] = ""
    data["dir"] = ""
    return {
        "data": data,
        "split": {"train": "0.7", "val": "0.1", "test": "0.2", "seed": "0"},
        "train": TrainConfig().to_mapping(),
        "eval": {"n_sessions": "10", "train_datasets": "all", "eval_datasets": "all",
                 "gmad_levels": "2", "gmad_eps": "none"},
    }


def parse_config_text(text: str) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser()
    parser.read_string(text)
    return {section: dict(parser[section]) for section in parser.sections()}


def config_to_text(cfg: dict[str, dict[str, str]]) -> str:
    lines = []
    for section in sorted(cfg):
        lines.append(f"[{section}]")
        for key in sorted(cfg[section]):
            lines.append(f"{key} = {cfg[section][key]}")
        lines.append("")
    return "\n".join(lines)


def load_config(path: str | Path | None, seed: int | None,
                overrides: list[str]) -> dict[str, dict[str, str]]:
    cfg = default_config()
    if path is not None:
        file = Path(path)
        if not file.is_file():
            raise DataFormatError(f"config file not found: {file}")
        try:
            loaded = parse_config_text(file.read_text(encoding="utf-8"))
        except (configparser.Error, UnicodeDecodeError) as exc:
            raise DataFormatError(f"unreadable config file {file}: {exc}") from exc
        for section, values in loaded.items():
            cfg.setdefault(section, {}).update(values)
    if seed is not None:
        cfg["split"]["seed"] = str(seed)
        cfg["train"]["seed"] = str(seed)
    for assignment in overrides:
        target, _, value = assignment.partition("=")
        section, _, key = target.partition(".")
        if not section or not key or "=" not in assignment:
            raise UsageError(f"--set expects section.key=value, got '{assignment}'")
        cfg.setdefault(section, {})[key.strip()] = value.strip()
    return cfg


def generator_config(cfg: dict[str, dict[str, str]]) -> GeneratorConfig:
    kwargs = {}
    for f in fields(GeneratorConfig):
        raw = cfg["data"].get(f.name)
        if raw is None:
            continue
        kwargs[f.name] = int(raw) if f.type == "int" else float(raw)
    return GeneratorConfig(**kwargs)


def train_config(cfg: dict[str, dict[str, str]]) -> TrainConfig:
    return TrainConfig.from_mapping(cfg["train"])


def split_spec(cfg: dict[str, dict[str, str]]) -> SplitSpec:
    section = cfg["split"]
    return SplitSpec(train=float(section["train"]), val=float(section["val"]),
                     test=float(section["test"]), seed=int(section["seed"]))


def _dataset_ids(raw: str, available: list[int]) -> list[int]:
    if raw.strip().lower() in ("", "all"):
        return list(available)
    return [int(part) for part in raw.split(",") if part.strip()]


def resolve_data_files(cfg: dict[str, dict[str, str]], cli_files) -> list[Path]:
    if cli_files:
        paths = [Path(p) for p in cli_files]
    elif cfg["data"].get("files"):
        paths = [Path(p.strip()) for p in cfg["data"]["files"].split(",") if p.strip()]
    elif cfg["data"].get("dir"):
        paths = sorted(Path(cfg["data"]["dir"]).glob("dataset_*.mtiqa"))
    else:
        paths = []
    if not paths:
        raise DataFormatError("no dataset files given (use --data, data.files or data.dir)")
    for p in paths:
        if not p.is_file():
            raise DataFormatError(f"dataset file not found: {p}")
    return paths


def _load_records(cfg, cli_files, expected_digest=None):
    records = []
    for path in resolve_data_files(cfg, cli_files):
        loaded, _ = load_dataset(path, expected_digest=expected_digest)
        records.extend(loaded)
    return records


# -- subcommands -----------------------------------------------------------------


def cmd_gendata(args) -> int:
    cfg = load_config(args.config, args.seed, args.set)
    gen_cfg = generator_config(cfg)
    seed = int(cfg["split"]["seed"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = generate(gen_cfg, seed)
    for m in range(gen_cfg.n_datasets):
        bucket = [rec for rec in records if rec.dataset_id == m]
        path = out / f"dataset_{m}.mtiqa"
        save_dataset(bucket, path)
        write_provenance(path, gen_cfg, seed)
        print(f"wrote {path} ({len(bucket)} records)")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.seed, args.set)
    tr_cfg = train_config(cfg)
    records = _load_records(cfg, args.data)
    tr, va, _ = split_records(records, split_spec(cfg))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = train(tr, va, tr_cfg, log_path=out / "train_log.csv")
    ckpt = out / "model.ckpt"
    save_checkpoint(ckpt, result.model, epoch=result.best_epoch,
                    val_metric=result.best_val_srcc)
    print(f"wrote {ckpt} (best epoch {result.best_epoch}, "
          f"val SRCC {result.best_val_srcc:.4f})")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = load_config(args.config, args.seed, args.set)
    tr_cfg = train_config(cfg)
    records = _load_records(cfg, args.data)
    available = sorted({rec.dataset_id for rec in records})
    train_ids = _dataset_ids(cfg["eval"]["train_datasets"], available)
    eval_ids = _dataset_ids(cfg["eval"]["eval_datasets"], available)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results_path = out / "results.csv"
    if args.checkpoint is not None:
        model, meta = load_checkpoint(args.checkpoint)
        _, _, te = split_records([r for r in records if r.dataset_id in train_ids],
                                 split_spec(cfg))
        eval_records = []
        for dataset_id in eval_ids:
            if dataset_id in train_ids:
                eval_records.extend(r for r in te if r.dataset_id == dataset_id)
            else:
                eval_records.extend(r for r in records if r.dataset_id == dataset_id)
        seed = int(cfg["split"]["seed"])
        metrics = evaluate_model(model, eval_records, model.config.u_infer, seed)
        results = [SessionResult(session=0, seed=seed, metrics=metrics)]
    else:
        n_sessions = int(args.sessions if args.sessions is not None
                         else cfg["eval"]["n_sessions"])
        results = run_sessions(records, tr_cfg, n_sessions=n_sessions,
                               seed=int(cfg["split"]["seed"]), jobs=args.jobs,
                               train_ids=train_ids, eval_ids=eval_ids)
    write_session_csv(results_path, results)
    print(f"wrote {results_path}")
    return EXIT_OK


def cmd_predict(args) -> int:
    cfg = load_config(args.config, args.seed, args.set)
    model, _ = load_checkpoint(args.checkpoint)
    records = _load_records(cfg, args.data,
                            expected_digest=model.space.content_digest())
    seed = int(cfg["split"]["seed"])
    rows = predict_rows(model, records, model.config.u_infer, seed)
    if args.out_file:
        with open(args.out_file, "w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row) + "\n")
        print(f"wrote {args.out_file} ({len(rows)} rows)")
    else:
        for row in rows:
            print(json.dumps(row))
    return EXIT_OK


def cmd_gmad(args) -> int:
    cfg = load_config(args.config, args.seed, args.set)
    model_a, _ = load_checkpoint(args.checkpoint_a)
    model_b, _ = load_checkpoint(args.checkpoint_b)
    records = _load_records(cfg, args.data,
                            expected_digest=model_a.space.content_digest())
    seed = int(cfg["split"]["seed"])
    ids = [f"{rec.dataset_id}:{rec.image_id}" for rec in records]
    scores_a, _ = predict_batch(model_a, records, model_a.config.u_infer, seed)
    scores_b, _ = predict_batch(model_b, records, model_b.config.u_infer, seed)
    eps_raw = cfg["eval"]["gmad_eps"]
    eps = None if eps_raw.strip().lower() in ("", "none") else float(eps_raw)
    names = (Path(args.checkpoint_a).stem, Path(args.checkpoint_b).stem)
    if names[0] == names[1]:  # same file name (e.g. two model.ckpt runs)
        names = (names[0] + "_a", names[1] + "_b")
    pairs = gmad_pairs(ids, scores_a, scores_b, names=names,
                       levels=int(cfg["eval"]["gmad_levels"]), eps=eps)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "gmad_pairs.csv"
    write_gmad_csv(path, pairs)
    print(f"wrote {path} ({len(pairs)} pairs)")
    return EXIT_OK


# -- argument plumbing --------------------------------------------------------------


def build_parser() -> _Parser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="INI configuration file")
    common.add_argument("--seed", type=int, help="master seed (split and training)")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--jobs", type=int, default=1, help="parallel session workers")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one configuration value")

    parser = _Parser(prog="mtiqa",
                     description="multitask image quality assessment toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("gendata", parents=[common],
                   help="generate the synthetic datasets").set_defaults(func=cmd_gendata)

    p_train = sub.add_parser("train", parents=[common], help="train a model")
    p_train.add_argument("--data", nargs="+", help="dataset files")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", parents=[common],
                            help="evaluate a checkpoint or run full sessions")
    p_eval.add_argument("--data", nargs="+", help="dataset files")
    p_eval.add_argument("--checkpoint", help="evaluate this checkpoint only")
    p_eval.add_argument("--sessions", type=int, help="number of train/eval sessions")
    p_eval.set_defaults(func=cmd_eval)

    p_pred = sub.add_parser("predict", parents=[common], help="score images")
    p_pred.add_argument("--checkpoint", required=True)
    p_pred.add_argument("--data", nargs="+", help="dataset files")
    p_pred.add_argument("--out-file", help="write JSON lines here instead of stdout")
    p_pred.set_defaults(func=cmd_predict)

    p_gmad = sub.add_parser("gmad", parents=[common],
                            help="maximum-differentiation pairs between two models")
    p_gmad.add_argument("--checkpoint-a", required=True)
    p_gmad.add_argument("--checkpoint-b", required=True)
    p_gmad.add_argument("--data", nargs="+", help="corpus dataset files")
    p_gmad.set_defaults(func=cmd_gmad)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataFormatError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FileNotFoundError, IsADirectoryError, UnknownWordError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingDivergedError, NonFiniteError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
