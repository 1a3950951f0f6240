"""Command-line batch driver.

``mdis saliency`` computes maps for a directory of images, ``mdis eval``
scores a directory of maps against a fixation CSV, and ``mdis train`` fits
one parameter set to a whole image directory (e.g. to recalibrate the
universal parameters). Options may come from a TOML file given with
``--config``; flags on the command line take precedence.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import re
import sys
import warnings
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from . import evaluation, hmt
from .mapio import IMAGE_SUFFIXES, read_image, read_map, write_label_pgms, write_map
from .paramfile import load_params, save_params
from .pyramid import dwt2d, prepare_image
from .saliency import mdis

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("mdis")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_EMPTY = 4

VARIANTS = ("uhmt", "thmt", "vhmt")
MAP_FORMATS = ("pfm", "pgm", "csv")
MANIFEST = "manifest.csv"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    input: str = ""
    output: str = ""
    variant: str = "thmt"
    scales: int = 5
    select: list = field(default_factory=lambda: [0, 1, 2, 3, 4, 5])
    params: str = ""
    fixations: str = ""
    sigma: float = 16.0
    negatives: int = 0
    seed: int = 0
    format: list = field(default_factory=lambda: ["pfm"])
    jobs: int = 1
    wavelet: str = "haar"
    prior: str = "window"
    soft_context: bool = False
    max_iter: int = 50
    rel_tol: float = 1e-5
    cache: bool = False
    labels: bool = False

    def log_settings(self) -> None:
        for k, v in asdict(self).items():
            log.info("config %s = %r", k, v)


def _split_list(value, conv=str) -> list:
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    return [conv(v.strip() if isinstance(v, str) else v) for v in value]


def build_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the ``--config`` file, then explicit flags."""
    values = {}
    if getattr(args, "config", None):
        try:
            with open(args.config, "rb") as f:
                values.update(tomllib.load(f))
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    known = {f.name for f in fields(RunConfig)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    for name in known:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    try:
        if "select" in values:
            values["select"] = _split_list(values["select"], int)
        if "format" in values:
            values["format"] = _split_list(values["format"], lambda s: str(s).lower())
        cfg = RunConfig(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    cfg.variant = str(cfg.variant).lower()
    return cfg


def _check_common(cfg: RunConfig) -> None:
    if not cfg.input or not Path(cfg.input).is_dir():
        raise ConfigError(f"input directory does not exist: {cfg.input!r}")
    if not cfg.output:
        raise ConfigError("--output is required")


def check_saliency_config(cfg: RunConfig) -> None:
    _check_common(cfg)
    if cfg.variant not in VARIANTS:
        raise ConfigError(f"variant must be one of {VARIANTS}, got {cfg.variant!r}")
    if cfg.scales < 1:
        raise ConfigError("scales must be >= 1")
    bad = [k for k in cfg.select if not 0 <= k <= cfg.scales]
    if not cfg.select or bad:
        raise ConfigError(f"select entries must lie in 0..{cfg.scales}")
    bad = [f for f in cfg.format if f not in MAP_FORMATS]
    if not cfg.format or bad:
        raise ConfigError(f"format must be drawn from {MAP_FORMATS}")
    if cfg.prior not in ("window", "mean", "labels"):
        raise ConfigError(f"unknown prior {cfg.prior!r}")
    if cfg.jobs < 1:
        raise ConfigError("jobs must be >= 1")
    if cfg.params:
        if not Path(cfg.params).is_file():
            raise ConfigError(f"params file not found: {cfg.params}")
        try:
            p = load_params(cfg.params)
        except ValueError as exc:
            raise ConfigError(f"{cfg.params}: {exc}") from None
        if (p.flavor == "vhmt") != (cfg.variant == "vhmt"):
            raise ConfigError(f"params flavor {p.flavor} does not fit variant {cfg.variant}")
    elif cfg.variant == "uhmt":
        try:
            hmt.universal_params()
        except (OSError, ValueError) as exc:
            raise ConfigError(f"no usable built-in universal parameters: {exc}") from None


def _setup_logging(out: Path) -> logging.Handler:
    out.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(out / "run.log", mode="w", encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    log.addHandler(handler)
    if not any(isinstance(h, logging.StreamHandler) and not isinstance(h, logging.FileHandler) for h in log.handlers):
        stream = logging.StreamHandler()
        stream.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
        log.addHandler(stream)
    log.setLevel(logging.INFO)
    return handler


def _process_image(path: Path, cfg: RunConfig):
    image_id = path.stem
    out = Path(cfg.output)
    img = read_image(path)
    cache = out / f"{image_id}.{cfg.variant}.params.toml"
    params, max_iter = None, cfg.max_iter
    if cfg.params:
        params = load_params(cfg.params)
    if cfg.cache and cfg.variant != "uhmt" and cache.is_file():
        params, max_iter = load_params(cache), 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = mdis(
            img,
            cfg.variant,
            scales=cfg.scales,
            params=params,
            wavelet=cfg.wavelet,
            soft_context=cfg.soft_context,
            prior=cfg.prior,
            max_iter=max_iter,
            rel_tol=cfg.rel_tol,
        )
    if cfg.cache and cfg.variant != "uhmt" and max_iter:
        save_params(res.params, cache)
    written = []
    for k in sorted(set(cfg.select)):
        smap = res.map(k)
        for fmt in cfg.format:
            written.append(write_map(out / f"{image_id}.{cfg.variant}{k}.{fmt}", smap, fmt).name)
    if cfg.labels:
        shapes = [g.shape for g in res.pyramid.scales]
        write_label_pgms(res.labels, shapes, out / f"{image_id}.{cfg.variant}")
    h, w = img.shape[:2]
    return image_id, h, w, res.image.shape[0], res.seconds, written


def run_saliency(cfg: RunConfig) -> int:
    """Compute and write saliency maps for every image in ``cfg.input``."""
    try:
        check_saliency_config(cfg)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    out = Path(cfg.output)
    try:
        handler = _setup_logging(out)
    except OSError as exc:
        log.error("cannot create output directory: %s", exc)
        return EXIT_IO
    try:
        cfg.log_settings()
        paths, n_warn = [], 0
        for p in sorted(Path(cfg.input).iterdir()):
            if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES:
                paths.append(p)
            elif p.is_file():
                log.warning("skipping non-image file %s", p.name)
                n_warn += 1

        rows = []
        if cfg.jobs > 1 and len(paths) > 1:
            with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
                futures = [pool.submit(_process_image, p, cfg) for p in paths]
                outcomes = []
                for p, fut in zip(paths, futures):
                    try:
                        outcomes.append((p, fut.result(), None))
                    except Exception as exc:  # noqa: BLE001 - one bad image must not stop the batch
                        outcomes.append((p, None, exc))
        else:
            outcomes = []
            for p in paths:
                try:
                    outcomes.append((p, _process_image(p, cfg), None))
                except Exception as exc:  # noqa: BLE001
                    outcomes.append((p, None, exc))

        for p, row, exc in outcomes:
            if exc is not None:
                log.warning("skipping %s: %s", p.name, exc)
                n_warn += 1
                continue
            image_id, h, w, side, seconds, written = row
            log.info("%s: %d map files, %.5f s", image_id, len(written), seconds)
            rows.append(row)

        if not rows:
            log.error("no images processed")
            return EXIT_EMPTY
        _update_manifest(out / MANIFEST, cfg.variant, rows)
        log.info("%d images processed, %d warnings", len(rows), n_warn)
        return EXIT_OK
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    finally:
        log.removeHandler(handler)
        handler.close()


def _read_manifest(path: Path) -> list[dict]:
    if not path.is_file():
        return []
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def _update_manifest(path: Path, variant: str, rows) -> None:
    keep = [r for r in _read_manifest(path) if r["variant"] != variant]
    keep += [
        {"image_id": i, "variant": variant, "height": h, "width": w, "side": s, "seconds": f"{t:.6f}"}
        for i, h, w, s, t, _ in rows
    ]
    keep.sort(key=lambda r: (r["variant"], r["image_id"]))
    buf = io.StringIO()
    wr = csv.DictWriter(buf, ["image_id", "variant", "height", "width", "side", "seconds"], lineterminator="\n")
    wr.writeheader()
    wr.writerows(keep)
    path.write_text(buf.getvalue(), encoding="utf-8")


_MAP_NAME = re.compile(r"^(?P<id>.+)\.(?P<label>[A-Za-z][A-Za-z0-9_-]*)\.(?P<ext>pfm|csv|pgm|png)$", re.I)
_VARIANT_LABEL = re.compile(r"^(uhmt|thmt|vhmt)(\d+)$", re.I)
_EXT_RANK = {"pfm": 0, "csv": 1, "pgm": 2, "png": 3}


def collect_maps(folder: Path) -> dict[str, dict[str, Path]]:
    """``{label: {image_id: path}}`` for files named ``<image_id>.<label>.<ext>``."""
    found: dict[str, dict[str, Path]] = {}
    for p in sorted(folder.iterdir()):
        m = _MAP_NAME.match(p.name)
        if not m or re.fullmatch(r"labels\d+", m["label"], re.I):
            continue
        label = m["label"].upper()
        slot = found.setdefault(label, {})
        prev = slot.get(m["id"])
        if prev is None or _EXT_RANK[m["ext"].lower()] < _EXT_RANK[prev.suffix.lstrip(".").lower()]:
            slot[m["id"]] = p
    return found


def _label_key(label: str):
    m = _VARIANT_LABEL.match(label)
    if m:
        return (0, VARIANTS.index(m[1].lower()), int(m[2]), "")
    return (1, 0, 0, label)


def run_eval(cfg: RunConfig) -> int:
    """Score every map in ``cfg.input`` and write benchmark-style reports."""
    try:
        _check_common(cfg)
        if not cfg.fixations:
            raise ConfigError("--fixations is required")
        if cfg.sigma <= 0:
            raise ConfigError("sigma must be positive")
        if cfg.negatives < 0:
            raise ConfigError("negatives must be >= 0 (0 means all non-fixated pixels)")
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    out = Path(cfg.output)
    try:
        handler = _setup_logging(out)
    except OSError as exc:
        log.error("cannot create output directory: %s", exc)
        return EXIT_IO
    try:
        cfg.log_settings()
        try:
            fixations = evaluation.read_fixations(cfg.fixations)
        except (OSError, ValueError) as exc:
            log.error("cannot load fixations: %s", exc)
            return EXIT_IO
        folder = Path(cfg.input)
        manifest = {}
        for r in _read_manifest(folder / MANIFEST):
            manifest[(r["variant"], r["image_id"])] = r
        shapes = {k[1]: (int(r["height"]), int(r["width"]), int(r["side"])) for k, r in manifest.items()}

        found = collect_maps(folder)
        if not found:
            log.error("no map files in %s", folder)
            return EXIT_EMPTY
        reports = []
        for label in sorted(found, key=_label_key):
            m = _VARIANT_LABEL.match(label)
            variant = m[1].lower() if m else None
            maps, fx, sig, times = {}, {}, {}, {}
            for image_id, path in found[label].items():
                arr = read_map(path)
                maps[image_id] = arr
                f = fixations.get(image_id)
                sig[image_id] = cfg.sigma
                if f is not None and image_id in shapes:
                    h, w, side = shapes[image_id]
                    if arr.shape != (h, w) and arr.shape == (side, side):
                        f = f.to_prepared((h, w), side)
                        sig[image_id] = cfg.sigma * side / min(h, w)
                if f is not None:
                    fx[image_id] = f
                row = manifest.get((variant, image_id))
                if row is not None:
                    times[image_id] = float(row["seconds"])
            rep = evaluation.evaluate_batch(
                maps,
                fx,
                label=label,
                sigma=sig,
                negatives=cfg.negatives or None,
                seed=[cfg.seed, zlib.crc32(label.encode("utf-8"))],
                times=times,
            )
            for s in rep.items:
                if not s.ok:
                    log.warning("%s %s: %s", label, s.image_id, s.error)
            reports.append(rep)

        (out / "report.csv").write_text(evaluation.report_csv(reports), encoding="utf-8")
        (out / "report.txt").write_text(evaluation.format_table(reports), encoding="utf-8")
        (out / "per_image.csv").write_text(evaluation.per_image_csv(reports), encoding="utf-8")
        log.info("\n%s", evaluation.format_table(reports))
        if all(r.empty for r in reports):
            log.error("no map could be scored")
            return EXIT_EMPTY
        return EXIT_OK
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    finally:
        log.removeHandler(handler)
        handler.close()


def run_train(cfg: RunConfig) -> int:
    """Fit one tied parameter set to every image of a directory."""
    try:
        _check_common(cfg)
        if cfg.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}")
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    trees = []
    for p in sorted(Path(cfg.input).iterdir()):
        if p.suffix.lower() not in IMAGE_SUFFIXES:
            continue
        try:
            trees.append(dwt2d(prepare_image(read_image(p)), cfg.scales, cfg.wavelet))
        except (OSError, ValueError) as exc:
            log.warning("skipping %s: %s", p.name, exc)
    if not trees:
        log.error("no usable images")
        return EXIT_EMPTY
    init = hmt.init_params(trees, cfg.variant)
    train = hmt.em_train_vector if cfg.variant == "vhmt" else hmt.em_train
    params, trace = train(trees, init, max_iter=cfg.max_iter, rel_tol=cfg.rel_tol)
    log.info("%d images, %d EM iterations, log-likelihood %.3f", len(trees), len(trace) - 1, trace[-1])
    try:
        Path(cfg.output).parent.mkdir(parents=True, exist_ok=True)
        save_params(params, cfg.output)
    except OSError as exc:
        log.error("cannot write %s: %s", cfg.output, exc)
        return EXIT_IO
    return EXIT_OK


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mdis", description="Multiscale discriminant saliency.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML file with default option values")
        p.add_argument("--input", help="input directory")
        p.add_argument("--output", help="output directory (or file for train)")
        p.add_argument("--seed", type=int)

    s = sub.add_parser("saliency", help="compute saliency maps for a directory of images")
    common(s)
    s.add_argument("--variant", choices=VARIANTS)
    s.add_argument("--scales", type=int, help="dyadic scales (default 5)")
    s.add_argument("--select", help="comma-separated scales to export, 0 = integrated")
    s.add_argument("--params", help="HMT parameter file (UHMT parameters, or EM start for THMT/VHMT)")
    s.add_argument("--format", help="comma-separated subset of pfm,pgm,csv")
    s.add_argument("--jobs", type=int, help="worker processes")
    s.add_argument("--wavelet", choices=["haar", "db2"])
    s.add_argument("--prior", choices=["window", "mean", "labels"])
    s.add_argument("--soft-context", dest="soft_context", action="store_const", const=True)
    s.add_argument("--cache", action="store_const", const=True, help="reuse trained per-image parameters")
    s.add_argument("--labels", action="store_const", const=True, help="also export MAP label PGMs")
    s.add_argument("--max-iter", dest="max_iter", type=int)

    e = sub.add_parser("eval", help="score saliency maps against fixations")
    common(e)
    e.add_argument("--fixations", help="CSV with header image_id,x,y[,subject]")
    e.add_argument("--sigma", type=float, help="fixation density width in pixels (default 16)")
    e.add_argument("--negatives", type=int, help="sampled negatives per image, 0 = all pixels")

    t = sub.add_parser("train", help="fit one HMT parameter file to a directory of images")
    common(t)
    t.add_argument("--variant", choices=VARIANTS)
    t.add_argument("--scales", type=int)
    t.add_argument("--max-iter", dest="max_iter", type=int)
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if not log.handlers:
        stream = logging.StreamHandler()
        stream.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
        log.addHandler(stream)
        log.setLevel(logging.INFO)
    try:
        cfg = build_config(args)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    runner = {"saliency": run_saliency, "eval": run_eval, "train": run_train}[args.command]
    return runner(cfg)


if __name__ == "__main__":
    sys.exit(main())
