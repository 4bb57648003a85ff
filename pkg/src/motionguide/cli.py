"""Command-line orchestration.

Exit codes: 0 success, 2 usage error, 3 data error, 4 remote-planner error.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from . import attention, guidance, planner, render
from .errors import (EmptyPrompt, GridMismatch, MotionGuideError, NoInstanceFound,
                     PlannerTimeout, SchemaViolation, TransportFailure)
from .features import load_volume
from .layout import SceneLayout, plan_layout
from .lexicon import default_lexicon, load_lexicon
from .parser import parse_prompt

EXIT_DATA = 3
EXIT_PLANNER = 4


def _load_config_file(path: str | None) -> dict:
    """Flat key=value config; command-line flags always win."""
    if not path:
        return {}
    defaults: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise click.UsageError(f"{path}:{lineno}: expected key=value")
        defaults[key.strip().replace("-", "_")] = value.strip()
    return defaults


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None, help="Flat key=value config file; flags override it.")
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
@click.pass_context
def main(ctx: click.Context, config_path: str | None, verbose: bool) -> None:
    """Plan layouts, compute guidance masks, and run the toy guided denoiser."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING)
    defaults = _load_config_file(config_path)
    ctx.default_map = {cmd: defaults for cmd in ("plan", "masks", "guide", "render")}


def _lexicon(path: str | None):
    return load_lexicon(path) if path else default_lexicon()


def _parse_steps(spec_text: str) -> tuple[int, int]:
    try:
        lo, _, hi = spec_text.partition(":")
        rng = (int(lo), int(hi))
    except ValueError:
        raise click.UsageError(f"--steps expects A:B, got {spec_text!r}")
    if rng[0] < 1 or rng[1] < rng[0]:
        raise click.UsageError(f"bad step range {spec_text!r}")
    return rng


@main.command()
@click.option("--prompt", required=True, help="Compositional text prompt.")
@click.option("--frames", type=click.IntRange(min=1), default=8, show_default=True)
@click.option("--lexicon", "lexicon_path", type=click.Path(exists=True), default=None)
@click.option("--use-llm", is_flag=True, help="Delegate planning to the remote endpoint.")
@click.option("--out", type=click.Path(), required=True, help="Layout JSON output path.")
def plan(prompt: str, frames: int, lexicon_path: str | None,
         use_llm: bool, out: str) -> None:
    """Plan a spatial-temporal box layout from a prompt."""
    lex = _lexicon(lexicon_path)
    try:
        if use_llm:
            config = planner.PlannerEndpointConfig.from_env()
            graph_result = planner.request_graph(prompt, config, lexicon=lex)
            if graph_result.fallback_used:
                click.echo("warning: planner endpoint failed; used rule parser",
                           err=True)
                layout = plan_layout(graph_result.graph, frames)
            else:
                layout_result = planner.request_layout(graph_result.graph,
                                                       frames, config)
                if layout_result.fallback_used:
                    click.echo("warning: planner endpoint failed; "
                               "used layout reasoner", err=True)
                layout = layout_result.layout
        else:
            graph = parse_prompt(prompt, lex)
            layout = plan_layout(graph, frames)
    except (EmptyPrompt, NoInstanceFound) as exc:
        raise click.UsageError(str(exc))
    except (PlannerTimeout, TransportFailure, SchemaViolation) as exc:
        click.echo(f"error: remote planner failed: {exc}", err=True)
        sys.exit(EXIT_PLANNER)
    except MotionGuideError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_DATA)
    layout.save(out)
    click.echo(f"wrote {out}")


@main.command()
@click.option("--layout", "layout_path", type=click.Path(exists=True), required=True)
@click.option("--features", "features_path", type=click.Path(exists=True), required=True)
@click.option("--alpha", type=float, default=guidance.DEFAULT_ALPHA, show_default=True)
@click.option("--out", type=click.Path(), required=True, help="Output directory.")
def masks(layout_path: str, features_path: str, alpha: float, out: str) -> None:
    """Compute per-instance branch masks and the composed mask (GMSK files)."""
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        layout = SceneLayout.load(layout_path)
        volume = load_volume(features_path)
        bundle = guidance.build_guidance(layout, volume, alpha)
    except (MotionGuideError, ValueError, json.JSONDecodeError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_DATA)
    summary = {"reference_frame": bundle.reference_frame, "masks": []}
    for mask in bundle.per_instance + [bundle.composed]:
        name = (f"mask_{mask.branch}_{mask.instance_id}.gmsk"
                if mask.instance_id >= 0 else f"mask_{mask.branch}.gmsk")
        mask.save(out_dir / name)
        lo, hi = mask.value_range()
        summary["masks"].append({
            "file": name, "branch": mask.branch, "instance": mask.instance_id,
            "nonzeros": mask.nonzero_count(), "min": lo, "max": hi,
        })
    (out_dir / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    click.echo(f"wrote {len(summary['masks'])} masks to {out_dir}")


@main.command()
@click.option("--layout", "layout_path", type=click.Path(exists=True), required=True)
@click.option("--features", "features_path", type=click.Path(exists=True), required=True)
@click.option("--mode", type=click.Choice(["unet", "dit"]), default="unet",
              show_default=True)
@click.option("--beta", type=float, default=None,
              help="Guidance factor; defaults to 10 (unet) / 0.15 (dit).")
@click.option("--eta", type=float, default=0.1, show_default=True)
@click.option("--steps", "steps_spec", default=None,
              help="Guided step range A:B; defaults to 1:25 (unet) / 1:10 (dit).")
@click.option("--total-steps", type=click.IntRange(min=0), default=None,
              help="Rows in the trace; defaults to the top of the step range.")
@click.option("--alpha", type=float, default=guidance.DEFAULT_ALPHA, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), required=True, help="Trace CSV path.")
def guide(layout_path: str, features_path: str, mode: str, beta: float | None,
          eta: float, steps_spec: str | None, total_steps: int | None,
          alpha: float, seed: int, out: str) -> None:
    """Run the toy guided denoise harness and write the per-step trace."""
    base = attention.UNET_DEFAULTS if mode == "unet" else attention.DIT_DEFAULTS
    step_range = _parse_steps(steps_spec) if steps_spec else base.step_range
    config = attention.GuidanceConfig(
        beta=base.beta if beta is None else beta,
        step_range=step_range, mode=mode, eta=eta)
    steps = total_steps if total_steps is not None else step_range[1]
    try:
        layout = SceneLayout.load(layout_path)
        volume = load_volume(features_path)
        if not layout.tracks:
            click.echo("warning: layout has no tracks; guidance mask is empty",
                       err=True)
        trace = attention.run_toy_denoise(layout, volume, config, steps,
                                          alpha=alpha, seed=seed)
    except (MotionGuideError, ValueError, json.JSONDecodeError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_DATA)
    Path(out).write_text(trace.to_csv(), encoding="utf-8")
    click.echo(f"wrote {len(trace.rows)} trace rows to {out}")


@main.command("render")
@click.option("--layout", "layout_path", type=click.Path(exists=True), required=True)
@click.option("--style", type=click.Choice(["svg", "ascii"]), default="svg",
              show_default=True)
@click.option("--out", type=click.Path(), required=True)
def render_cmd(layout_path: str, style: str, out: str) -> None:
    """Render a layout for inspection."""
    try:
        layout = SceneLayout.load(layout_path)
    except (ValueError, json.JSONDecodeError, KeyError) as exc:
        click.echo(f"error: corrupted layout: {exc}", err=True)
        sys.exit(EXIT_DATA)
    text = render.render_svg(layout) if style == "svg" else render.render_ascii(layout)
    Path(out).write_text(text, encoding="utf-8")
    click.echo(f"wrote {out}")


if __name__ == "__main__":
    main()
