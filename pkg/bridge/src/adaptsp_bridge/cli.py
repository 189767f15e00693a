"""Bridge CLI: encode batteries, inject embeddings, drive the toolkit.

The `run` subcommand is the end-to-end path: encode a battery with both
subject tokens, shell out to the `adaptsp` CLI for residuals, subspace and
adjustment, then inject the adjusted embeddings into the stub pipeline.
"""

import subprocess
import sys
from pathlib import Path

import click
import yaml

from adaptsp_bridge.battery import BatteryError, builtin_battery_path, load_battery
from adaptsp_bridge.encode import encode_pair
from adaptsp_bridge.encoders import EncoderError, load_encoder
from adaptsp_bridge.features import (
    FeatureError,
    image_feature,
    score_rows,
    write_scores_csv,
)
from adaptsp_bridge.inject import InjectionError, StubPipeline, inject_and_generate

BRIDGE_ERRORS = (BatteryError, EncoderError, InjectionError, FeatureError)


def _fail(exc):
    click.echo("error: %s" % exc, err=True)
    sys.exit(2)


def _battery(ref: str):
    path = Path(ref)
    if not path.exists():
        builtin = builtin_battery_path(ref)
        if builtin.exists():
            path = builtin
        else:
            _fail("battery %r: no such file or builtin battery" % ref)
    return load_battery(path)


@click.group()
def main():
    pass


@main.command("encode")
@click.option("--battery", "battery_ref", required=True,
              help="Battery YAML path or builtin name (celeba_sub, cc101_sub).")
@click.option("--encoder", "encoder_ref", default="seeded:1", show_default=True)
@click.option("--anchor-encoder", default="fine_tuned", show_default=True,
              type=click.Choice(["fine_tuned", "original"]))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--stem")
def cmd_encode(battery_ref, encoder_ref, anchor_encoder, out, stem):
    """Encode a battery into aligned personalized + class embedding files."""
    try:
        battery = _battery(battery_ref)
        bundle = load_encoder(encoder_ref, battery.token_personalized)
        pers, cls = encode_pair(bundle, battery, out,
                                anchor_encoder=anchor_encoder, stem=stem)
    except BRIDGE_ERRORS as exc:
        _fail(exc)
    click.echo(str(pers))
    click.echo(str(cls))


@main.command("inject")
@click.option("--embeddings", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--seeds", default="0", show_default=True,
              help="Comma-separated generation seeds.")
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--expected-dim", type=int, help="Override the pipeline's input width.")
def cmd_inject(embeddings, seeds, out, expected_dim):
    """Render one stub image per embedding row and seed."""
    try:
        seed_list = [int(s) for s in seeds.split(",") if s.strip()]
    except ValueError:
        _fail("--seeds must be comma-separated integers, got %r" % seeds)
    pipeline = StubPipeline(**({"expected_dim": expected_dim} if expected_dim else {}))
    try:
        written = inject_and_generate(pipeline, embeddings, seed_list, out)
    except BRIDGE_ERRORS as exc:
        _fail(exc)
    click.echo("wrote %d image(s) to %s" % (len(written), out))


@main.command("features")
@click.option("--reference", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--images", required=True, multiple=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--method", default="StubPipeline", show_default=True)
@click.option("--variant", default="baseline", show_default=True)
@click.option("--concept", default="subject", show_default=True)
@click.option("--metric", default="clip_i", show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def cmd_features(reference, images, method, variant, concept, metric, out):
    """Score each image against a reference image into a report-format CSV."""
    try:
        ref = image_feature(reference)
        entries = [(concept, metric, ref, image_feature(p)) for p in images]
        write_scores_csv(score_rows(method, variant, entries), out)
    except BRIDGE_ERRORS as exc:
        _fail(exc)
    click.echo("wrote %d row(s) to %s" % (len(entries), out))


def _toolkit(args, cwd):
    proc = subprocess.run(
        [sys.executable, "-m", "adaptsp", *args],
        cwd=cwd, capture_output=True, text=True,
    )
    if proc.returncode != 0:
        _fail("adaptsp %s failed (exit %d): %s"
              % (args[0], proc.returncode, proc.stderr.strip()))
    return proc.stdout


@main.command("run")
@click.option("--config", required=True, type=click.Path(exists=True, dir_okay=False))
def cmd_run(config):
    """Config-driven pipeline: encode -> residuals -> subspace -> adjust -> inject.

    YAML keys: battery, encoder (ref string), anchor_encoder, out, k, seeds.
    """
    try:
        cfg = yaml.safe_load(Path(config).read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        _fail("%s: %s" % (config, exc))
    unknown = set(cfg) - {"battery", "encoder", "anchor_encoder", "out", "k", "seeds"}
    if unknown:
        _fail("%s: unknown keys %s" % (config, sorted(unknown)))
    if "battery" not in cfg or "out" not in cfg:
        _fail("%s: config requires at least battery and out" % config)

    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    try:
        battery = _battery(str(cfg["battery"]))
        bundle = load_encoder(str(cfg.get("encoder", "seeded:1")), battery.token_personalized)
        pers, cls = encode_pair(
            bundle, battery, out, anchor_encoder=str(cfg.get("anchor_encoder", "fine_tuned"))
        )
    except BRIDGE_ERRORS as exc:
        _fail(exc)
    click.echo("encoded %s and %s" % (pers.name, cls.name))

    res = out / "residuals.npy"
    sub = out / "subspace"
    adj = out / "adjusted.npy"
    _toolkit(["residuals", "--personalized", str(pers), "--class-set", str(cls),
              "--out", str(res), "--stats-path", str(out / "stats.json")], out)
    _toolkit(["subspace", "--residuals", str(res), "--out", str(sub)], out)
    _toolkit(["adjust", "--mode", "proj", "--anchor", str(cls),
              "--subspace", str(sub), "--residuals", str(res),
              "--k", str(int(cfg.get("k", 1))), "--out", str(adj)], out)
    click.echo("toolkit pipeline done: %s" % adj.name)

    seeds = cfg.get("seeds", [0])
    if not isinstance(seeds, list):
        _fail("%s: seeds must be a list" % config)
    try:
        written = inject_and_generate(StubPipeline(), adj, [int(s) for s in seeds],
                                      out / "images")
    except BRIDGE_ERRORS as exc:
        _fail(exc)
    click.echo("rendered %d image(s)" % len(written))


if __name__ == "__main__":
    main()
