"""Command-line surface for the full pipeline.

Subcommands: residuals, subspace, cev, adjust, slerp (shorthand for
adjust --mode slerp), report, sweep, verify. Every output file is written
through the canonical serializers, so running the same command on the same
input bytes reproduces identical output bytes, parallel row mapping included.

Exit codes: 0 success, 2 input/validation error, 3 numerical degeneracy,
4 internal invariant violation. Diagnostics are a single line on stderr.
Set ADAPTSP_LOG=debug|info|warning|error to adjust logging.
"""

from __future__ import annotations

import functools
import json
import logging
import os
import sys
from pathlib import Path

import click
import numpy as np

from adaptsp import adjust as adjust_mod
from adaptsp import report as report_mod
from adaptsp import residuals as residuals_mod
from adaptsp import subspace as subspace_mod
from adaptsp.arrayio import read_array
from adaptsp.errors import ToolkitError, ValidationError
from adaptsp.numerics import fsum_dot
from adaptsp.store import (
    align,
    canonical_json_bytes,
    default_manifest_path,
    load_embedding_set,
    load_residual_set,
    save_embedding_set,
    save_residual_set,
    sha256_hex,
)

log = logging.getLogger("adaptsp")


def _setup_logging():
    level = os.environ.get("ADAPTSP_LOG", "warning").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )


def _cli_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            fn(*args, **kwargs)
        except ToolkitError as exc:
            click.echo("error: %s" % exc, err=True)
            sys.exit(exc.exit_code)
        except OSError as exc:
            click.echo("error: %s" % exc, err=True)
            sys.exit(2)
        except Exception as exc:  # noqa: BLE001 - surfaced as invariant violation
            log.debug("unexpected failure", exc_info=True)
            click.echo("internal error: %s" % exc, err=True)
            sys.exit(4)

    return wrapper


@click.group()
def main():
    _setup_logging()


def _load_set(path, manifest):
    return load_embedding_set(path, manifest)


def _write_text(path, text: str):
    Path(path).write_bytes(text.encode("utf-8"))


def _parse_thresholds(raw: str):
    tokens = [tok.strip() for tok in raw.split(",") if tok.strip()]
    if not tokens:
        raise ValidationError("no thresholds given")
    values = []
    for tok in tokens:
        try:
            v = float(tok)
        except ValueError:
            raise ValidationError("threshold %r is not a number" % tok) from None
        if not 0.0 < v <= 1.0:
            raise ValidationError("threshold %r outside (0, 1]" % tok)
        values.append((tok, v))
    return values


@main.command("residuals")
@click.option("--personalized", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--personalized-manifest", type=click.Path(exists=True, dir_okay=False))
@click.option("--class-set", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--class-manifest", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False))
@click.option("--stats-path", type=click.Path(dir_okay=False))
@click.option("--stats-only", is_flag=True, help="Write stats.json only, no residual array.")
@_cli_errors
def cmd_residuals(personalized, personalized_manifest, class_set, class_manifest,
                  out, stats_path, stats_only):
    """Subtract class-prompt embeddings from personalized ones, with stats."""
    if out is None and not stats_only:
        raise ValidationError("--out is required unless --stats-only is given")
    pers = _load_set(personalized, personalized_manifest)
    cls = _load_set(class_set, class_manifest)
    pers, cls = align(pers, cls)
    rs = residuals_mod.compute_residuals(pers, cls)
    rs.parent_paths = {
        "personalized": str(personalized),
        "personalized_manifest": str(personalized_manifest or default_manifest_path(personalized)),
        "class": str(class_set),
        "class_manifest": str(class_manifest or default_manifest_path(class_set)),
    }
    stats = residuals_mod.residual_stats(rs)
    if stats_path is None:
        base = Path(out).parent if out is not None else Path(".")
        stats_path = base / "stats.json"
    log.info("residuals: n=%d d=%d n_pairs=%d", rs.n, rs.d, stats.n_pairs)
    if not stats_only:
        save_residual_set(rs, out)
    _write_text(stats_path, canonical_json_bytes(stats.to_json_obj()).decode("ascii"))


@main.command("subspace")
@click.option("--residuals", "residuals_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--residuals-manifest", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--k-max", default=10, show_default=True, type=int)
@click.option("--thresholds", default="0.7,0.8", show_default=True)
@_cli_errors
def cmd_subspace(residuals_path, residuals_manifest, out, k_max, thresholds):
    """Fit the residual principal subspace; write archive, cev.csv, thresholds.json."""
    tokens = _parse_thresholds(thresholds)
    rs = load_residual_set(residuals_path, residuals_manifest)
    s = subspace_mod.fit_subspace(rs)
    outdir = Path(out)
    subspace_mod.save_subspace(s, outdir)
    provenance = {
        "residuals": str(residuals_path),
        "residuals_manifest": str(residuals_manifest or default_manifest_path(residuals_path)),
        "format_version": 1,
    }
    (outdir / "provenance.json").write_bytes(canonical_json_bytes(provenance))
    _write_text(outdir / "cev.csv", subspace_mod.cev_csv(s, k_max))
    _write_thresholds(outdir / "thresholds.json", s, tokens)
    log.info("subspace: rank=%d cev1=%.6f", s.rank, float(s.cev[0]))


def _write_thresholds(path, s, tokens):
    mapping = {}
    for tok, value in tokens:
        res = subspace_mod.components_to_threshold(s, value)
        mapping[tok] = {"k": res.k, "reached": res.reached}
    _write_text(path, canonical_json_bytes(mapping).decode("ascii"))


@main.command("cev")
@click.option("--subspace", "subspace_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--residuals", "residuals_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--residuals-manifest", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--k-max", default=10, show_default=True, type=int)
@click.option("--thresholds", default="0.7,0.8", show_default=True)
@_cli_errors
def cmd_cev(subspace_dir, residuals_path, residuals_manifest, out, k_max, thresholds):
    """Emit cev.csv and thresholds.json from an archive or straight from residuals."""
    tokens = _parse_thresholds(thresholds)
    if (subspace_dir is None) == (residuals_path is None):
        raise ValidationError("give exactly one of --subspace or --residuals")
    if subspace_dir is not None:
        s = subspace_mod.load_subspace(subspace_dir)
    else:
        s = subspace_mod.fit_subspace(load_residual_set(residuals_path, residuals_manifest))
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    _write_text(outdir / "cev.csv", subspace_mod.cev_csv(s, k_max))
    _write_thresholds(outdir / "thresholds.json", s, tokens)


@main.command("adjust")
@click.option("--anchor", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--anchor-manifest", type=click.Path(exists=True, dir_okay=False))
@click.option("--mode", required=True, type=click.Choice(["rm", "proj", "slerp"]))
@click.option("--rm", "rm_path", type=click.Path(exists=True, dir_okay=False),
              help="1-D array file with the mean residual (mode rm).")
@click.option("--subspace", "subspace_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--residuals", "residuals_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--residuals-manifest", type=click.Path(exists=True, dir_okay=False))
@click.option("--k", default=2, show_default=True, type=int)
@click.option("--no-recenter", is_flag=True,
              help="Raw linear projection: skip mean subtraction and re-addition.")
@click.option("--target", type=click.Path(exists=True, dir_okay=False))
@click.option("--target-manifest", type=click.Path(exists=True, dir_okay=False))
@click.option("--t", "t_value", type=float)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--parallel", default=1, show_default=True, type=int)
@click.option("--dtype", default="f64", show_default=True, type=click.Choice(["f32", "f64"]))
@_cli_errors
def cmd_adjust(anchor, anchor_manifest, mode, rm_path, subspace_dir, residuals_path,
               residuals_manifest, k, no_recenter, target, target_manifest, t_value,
               out, parallel, dtype):
    """Write adjusted embeddings: rm (add mean residual), proj, or slerp."""
    _do_adjust(anchor, anchor_manifest, mode, rm_path, subspace_dir, residuals_path,
               residuals_manifest, k, no_recenter, target, target_manifest, t_value,
               out, parallel, dtype)


def _do_adjust(anchor, anchor_manifest, mode, rm_path, subspace_dir, residuals_path,
               residuals_manifest, k, no_recenter, target, target_manifest, t_value,
               out, parallel, dtype):
    anchor_set = _load_set(anchor, anchor_manifest)
    parent_paths = {
        "anchor": str(anchor),
        "anchor_manifest": str(anchor_manifest or default_manifest_path(anchor)),
    }
    if mode == "rm":
        if rm_path is None:
            raise ValidationError("--mode rm requires --rm")
        rm_vec, _ = read_array(rm_path)
        if rm_vec.ndim != 1:
            raise ValidationError("--rm must point at a 1-D array file")
        result = adjust_mod.adjust_mean_residual(
            anchor_set, np.asarray(rm_vec, dtype=np.float64), parallel=parallel
        )
        parent_paths["rm"] = str(rm_path)
    elif mode == "proj":
        if subspace_dir is None or residuals_path is None:
            raise ValidationError("--mode proj requires --subspace and --residuals")
        s = subspace_mod.load_subspace(subspace_dir)
        rs = load_residual_set(residuals_path, residuals_manifest)
        result = adjust_mod.adjust_subspace(
            anchor_set, rs, s, k, recenter=not no_recenter, parallel=parallel
        )
        parent_paths["subspace"] = str(subspace_dir)
        parent_paths["residuals"] = str(residuals_path)
        parent_paths["residuals_manifest"] = str(
            residuals_manifest or default_manifest_path(residuals_path)
        )
    else:
        if target is None or t_value is None:
            raise ValidationError("--mode slerp requires --target and --t")
        target_set = _load_set(target, target_manifest)
        result = adjust_mod.slerp_adjust(anchor_set, target_set, t_value, parallel=parallel)
        parent_paths["target"] = str(target)
        parent_paths["target_manifest"] = str(target_manifest or default_manifest_path(target))
    result.manifest.parent_paths = parent_paths
    save_embedding_set(result, out, dtype=dtype)
    log.info("adjust: mode=%s rows=%d out=%s", mode, result.n, out)


@main.command("slerp")
@click.option("--anchor", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--anchor-manifest", type=click.Path(exists=True, dir_okay=False))
@click.option("--target", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--target-manifest", type=click.Path(exists=True, dir_okay=False))
@click.option("--t", "t_value", required=True, type=float)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--parallel", default=1, show_default=True, type=int)
@click.option("--dtype", default="f64", show_default=True, type=click.Choice(["f32", "f64"]))
@_cli_errors
def cmd_slerp(anchor, anchor_manifest, target, target_manifest, t_value, out, parallel, dtype):
    """Spherical interpolation between anchor and target sets (adjust --mode slerp)."""
    _do_adjust(anchor, anchor_manifest, "slerp", None, None, None, None, 0, False,
               target, target_manifest, t_value, out, parallel, dtype)


@main.command("report")
@click.option("--scores", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out-csv", type=click.Path(dir_okay=False))
@click.option("--out-md", type=click.Path(dir_okay=False))
@click.option("--scale", default=1, show_default=True, type=click.Choice(["1", "100"]))
@_cli_errors
def cmd_report(scores, out_csv, out_md, scale):
    """Aggregate per-concept score rows into per-method Average tables."""
    text = Path(scores).read_text(encoding="utf-8")
    if str(scores).endswith(".json"):
        rows = report_mod.parse_scores_json(text)
    else:
        rows = report_mod.parse_scores_csv(text)
    agg = report_mod.aggregate(rows)
    scale_int = int(scale)
    csv_text = report_mod.averages_csv(agg, scale=scale_int)
    if out_csv is not None:
        _write_text(out_csv, csv_text)
    if out_md is not None:
        _write_text(out_md, report_mod.averages_markdown(agg, scale=scale_int))
    if out_csv is None and out_md is None:
        click.echo(csv_text, nl=False)


@main.command("sweep")
@click.option("--entries", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False))
@_cli_errors
def cmd_sweep(entries, out):
    """Canonicalize a per-k score sweep into a sorted k,clip_t,clip_i CSV."""
    parsed = report_mod.parse_sweep_csv(Path(entries).read_text(encoding="utf-8"))
    csv_text = report_mod.sweep_table(parsed)
    if out is not None:
        _write_text(out, csv_text)
    else:
        click.echo(csv_text, nl=False)


@main.command("verify")
@click.argument("paths", nargs=-1, required=True, type=click.Path(exists=True))
@_cli_errors
def cmd_verify(paths):
    """Recompute and check digest chains and internal invariants of artifacts."""
    for p in paths:
        path = Path(p)
        if path.is_dir():
            _verify_subspace_dir(path)
        else:
            _verify_array_file(path)
    click.echo("verified %d artifact(s)" % len(paths))


def _verify_array_file(path: Path):
    manifest_path = default_manifest_path(path)
    try:
        obj = json.loads(manifest_path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ValidationError("%s: no manifest at %s" % (path, manifest_path)) from None
    except json.JSONDecodeError as exc:
        raise ValidationError("%s: malformed manifest (%s)" % (manifest_path, exc)) from exc
    if isinstance(obj, dict) and obj.get("kind") == "residual":
        rs = load_residual_set(path, manifest_path)
        _verify_parent_digests(path, rs.parents, rs.parent_paths, residual=True)
        click.echo("ok %s (residual set, n=%d d=%d)" % (path, rs.n, rs.d))
        return
    es = load_embedding_set(path, manifest_path)
    adjustment = es.manifest.adjustment
    if adjustment is not None:
        _verify_adjustment_parents(path, adjustment, es.manifest.parent_paths)
    click.echo("ok %s (embedding set, n=%d d=%d)" % (path, es.n, es.d))


def _verify_parent_digests(path, parents, parent_paths, residual=False):
    if not parent_paths:
        return
    base = Path(path).parent
    checks = (
        [("personalized", "personalized_manifest_digest"),
         ("class", "class_manifest_digest")] if residual else []
    )
    for key, digest_key in checks:
        src = parent_paths.get(key)
        want = parents.get(digest_key)
        if src is None or want is None:
            continue
        src_path = Path(src) if Path(src).is_absolute() else base / Path(src).name
        mpath = parent_paths.get(key + "_manifest")
        mpath = Path(mpath) if mpath and Path(mpath).is_absolute() else (
            base / Path(mpath).name if mpath else default_manifest_path(src_path)
        )
        if not src_path.exists() or not Path(mpath).exists():
            continue  # parents may have moved; digests stay recorded regardless
        got = load_embedding_set(src_path, mpath).manifest_digest()
        if got != want:
            raise ValidationError(
                "%s: parent %s digest mismatch (recorded %s, recomputed %s)"
                % (path, key, want, got)
            )


def _verify_adjustment_parents(path, adjustment, parent_paths):
    if not isinstance(adjustment, dict) or "parents" not in adjustment:
        raise ValidationError("%s: adjustment object lacks parents" % path)
    if not parent_paths:
        return
    base = Path(path).parent
    role_to_path = {
        "anchor": parent_paths.get("anchor"),
        "target": parent_paths.get("target"),
        "residuals": parent_paths.get("residuals"),
    }
    for parent in adjustment["parents"]:
        role = parent.get("role")
        src = role_to_path.get(role)
        if src is None:
            continue
        src_path = Path(src) if Path(src).is_absolute() else base / Path(src).name
        if not src_path.exists():
            continue
        if role == "residuals":
            got = load_residual_set(src_path).digest()
        else:
            mkey = role + "_manifest"
            mpath = parent_paths.get(mkey)
            mpath = Path(mpath) if mpath and Path(mpath).is_absolute() else (
                base / Path(mpath).name if mpath else None
            )
            got = load_embedding_set(src_path, mpath).digest()
        want = parent.get("array_digest")
        if want is not None and got != want:
            raise ValidationError(
                "%s: parent %s digest mismatch (recorded %s, recomputed %s)"
                % (path, role, want, got)
            )


def _verify_subspace_dir(path: Path):
    s = subspace_mod.load_subspace(path)
    for i in range(s.rank):
        for j in range(i, s.rank):
            g = fsum_dot(s.components[i], s.components[j])
            if abs(g - (1.0 if i == j else 0.0)) > 1e-8:
                raise ValidationError(
                    "%s: components %d,%d not orthonormal (gram %.3e)" % (path, i, j, g)
                )
    for k in range(1, s.rank):
        if s.cev[k] < s.cev[k - 1] - 1e-12:
            raise ValidationError("%s: cev decreases at k=%d" % (path, k + 1))
    if abs(float(s.cev[-1]) - 1.0) > 1e-9:
        raise ValidationError("%s: cev does not end at 1 (got %r)" % (path, float(s.cev[-1])))
    prov = path / "provenance.json"
    if prov.exists():
        try:
            obj = json.loads(prov.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError("%s: malformed provenance.json (%s)" % (path, exc)) from exc
        src = obj.get("residuals")
        if src:
            src_path = Path(src) if Path(src).is_absolute() else path.parent / Path(src).name
            if src_path.exists():
                got = load_residual_set(src_path).digest()
                if got != s.source_digest:
                    raise ValidationError(
                        "%s: source digest mismatch (recorded %s, recomputed %s)"
                        % (path, s.source_digest, got)
                    )
    click.echo("ok %s (subspace, rank=%d)" % (path, s.rank))


if __name__ == "__main__":
    main()
