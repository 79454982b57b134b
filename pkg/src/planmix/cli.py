"""Command-line entry point.

One binary, eight subcommands: plan, render, chat, serve, loudness,
tokenize, eval, selftest. Configuration precedence is flags > environment
(PLANMIX_*) > config file (--config, JSON) > built-in defaults.

Exit codes (stable, scripts may rely on them):

  0  success
  1  plan failed validation / selftest failure
  2  usage error (bad flags, unreadable arguments)
  3  ParseError           planner output had no usable envelope
  4  PlanRejected         plan still invalid after the corrective retry
  5  BackendError / NoResponse   LLM backend failures
  6  AgentError           synthesis backend failures
  7  StoreError / NotFound / NotRendered   session persistence
  8  data format errors (WAV, feature container, token text, shapes)
  9  ConfigError          invalid engine configuration
"""

from __future__ import annotations

import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import click

from . import errors
from .agents import GenerationRequest, RemoteAgentConfig, make_agent
from .audioio import read_wav, write_wav
from .errors import EngineError
from .features import read_features
from .loudness import SILENCE_LUFS, measure_loudness
from .metrics import OnsetConfig, evaluate_corpus
from .mixer import MixConfig, render_plan
from .plan import Plan, serialize_plan, validate_plan
from .planner import PlannerConfig, load_template, negotiate_plan
from .selftest import run_selftest
from .session import SessionConfig, SessionEngine, SessionStore
from .tokens import Codebook, FrameSequence, encode_token_string, quantize
from .utils import stable_hash

logger = logging.getLogger(__name__)

_EXIT_CODES: list[tuple[type, int]] = [
    (errors.ParseError, 3),
    (errors.PlanRejected, 4),
    (errors.BackendError, 5),
    (errors.NoResponse, 5),
    (errors.AgentError, 6),
    (errors.StoreError, 7),
    (errors.NotFound, 7),
    (errors.NotRendered, 7),
    (errors.ConfigError, 9),
]


def exit_code_for(exc: EngineError) -> int:
    for error_type, code in _EXIT_CODES:
        if isinstance(exc, error_type):
            return code
    return 8  # data/format errors


@dataclass
class CliState:
    config: dict
    out_dir: Path
    json_output: bool

    def setting(self, flag_value, env_suffix: str, config_key: str, default):
        """flags > environment > config file > default."""
        if flag_value is not None:
            return flag_value
        env_value = os.environ.get(f"PLANMIX_{env_suffix}")
        if env_value is not None:
            return env_value
        if config_key in self.config:
            return self.config[config_key]
        return default


def _planner_config(state: CliState, backend, endpoint, model, script) -> PlannerConfig:
    return PlannerConfig(
        backend=state.setting(backend, "PLANNER_BACKEND", "planner_backend", "scripted"),
        endpoint=state.setting(endpoint, "PLANNER_ENDPOINT", "planner_endpoint", ""),
        model=state.setting(model, "PLANNER_MODEL", "planner_model", ""),
        auth_token_env=state.setting(None, "PLANNER_TOKEN_ENV", "planner_token_env", ""),
        script_path=state.setting(script, "PLANNER_SCRIPT", "planner_script", ""),
    )


def _agent(state: CliState, backend, endpoint):
    name = state.setting(backend, "AGENT_BACKEND", "agent_backend", "stub")
    url = state.setting(endpoint, "AGENT_ENDPOINT", "agent_endpoint", "")
    remote = RemoteAgentConfig(endpoint=url) if url else None
    return make_agent(name, remote)


def _emit(state: CliState, payload: dict, human: str) -> None:
    if state.json_output:
        click.echo(json.dumps(payload, indent=2))
    else:
        click.echo(human)


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="JSON config file (lowest-precedence settings).")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=".",
              help="Directory for written artifacts.")
@click.option("--json", "json_output", is_flag=True, help="Machine-readable output.")
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
@click.pass_context
def cli(ctx, config_path, out_dir, json_output, verbose):
    """Plan-driven audio composition engine."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING)
    config = {}
    if config_path:
        config = json.loads(Path(config_path).read_text())
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ctx.obj = CliState(config=config, out_dir=out, json_output=json_output)


@cli.command("plan")
@click.argument("request")
@click.option("--duration", type=float, default=10.0, show_default=True)
@click.option("--variant", type=click.Choice(["standard", "volume_control"]),
              default="standard", show_default=True)
@click.option("--planner", "backend", type=click.Choice(["scripted", "http_chat"]),
              default=None)
@click.option("--endpoint", default=None)
@click.option("--model", default=None)
@click.option("--script", default=None, help="Scripted-planner fixture file.")
@click.pass_obj
def cmd_plan(state: CliState, request, duration, variant, backend, endpoint, model, script):
    """Ask the planner to decompose REQUEST into timed generation calls."""
    config = _planner_config(state, backend, endpoint, model, script)
    template = load_template(variant)
    negotiation = negotiate_plan(config, template, [], request, duration)
    last = negotiation.attempts[-1]
    report = last.report.to_json_dict() if last.report else None
    plan_path = state.out_dir / "plan.json"
    report_path = state.out_dir / "plan_report.json"
    report_path.write_text(json.dumps({"report": report, "parse_error": last.parse_error},
                                      indent=2))
    if negotiation.plan is None:
        _emit(state, {"valid": False, "report": report, "parse_error": last.parse_error},
              f"plan invalid: {last.parse_error or ', '.join(last.report.rule_ids())}")
        raise SystemExit(1)
    plan = negotiation.plan
    plan_path.write_text(json.dumps(plan.to_json_dict(), indent=2))
    _emit(
        state,
        {"valid": True, "plan": plan.to_json_dict(), "envelope": serialize_plan(plan),
         "files": {"plan": str(plan_path), "report": str(report_path)}},
        f"plan ok: {len(plan.steps)} steps -> {plan_path}",
    )


@cli.command("render")
@click.argument("plan_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--agent", "backend", type=click.Choice(["stub", "remote"]), default=None)
@click.option("--endpoint", default=None, help="Remote agent endpoint.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--sample-rate", type=int, default=16000, show_default=True)
@click.option("--crossfade", type=float, default=0.010, show_default=True)
@click.option("--limiter", type=click.Choice(["none", "normalize", "soft_clip"]),
              default="normalize", show_default=True)
@click.option("--ceiling", type=float, default=-1.0, show_default=True,
              help="Peak ceiling in dBFS.")
@click.option("--workers", type=int, default=1, show_default=True)
@click.pass_obj
def cmd_render(state: CliState, plan_file, backend, endpoint, seed, sample_rate,
               crossfade, limiter, ceiling, workers):
    """Generate and mix every step of a saved plan into a WAV."""
    plan = Plan.from_json_dict(json.loads(Path(plan_file).read_text()))
    validation = validate_plan(plan)
    if not validation.valid:
        _emit(state, {"valid": False, "report": validation.to_json_dict()},
              "plan invalid: " + ", ".join(validation.rule_ids()))
        raise SystemExit(1)
    agent = _agent(state, backend, endpoint)
    config = MixConfig(
        total_duration=plan.total_duration,
        sample_rate=sample_rate,
        crossfade=crossfade,
        peak_ceiling=ceiling,
        limiter=limiter,
    )
    seeds = [stable_hash("render", seed, i) % 2**31 for i in range(len(plan.steps))]
    mix, report = render_plan(plan, agent, config, seeds=seeds, max_workers=workers)
    wav_path = state.out_dir / "mix.wav"
    report_path = state.out_dir / "mix_report.json"
    write_wav(wav_path, mix)
    report_path.write_text(report.to_json())
    _emit(
        state,
        {"wav": str(wav_path), "report": str(report_path),
         "duration": mix.duration, "peak": report.peak_after_limiter},
        f"rendered {mix.duration:.2f}s at {sample_rate} Hz -> {wav_path}",
    )


@cli.command("chat")
@click.option("--store", "store_dir", type=click.Path(file_okay=False), default="./sessions")
@click.option("--duration", type=float, default=10.0, show_default=True)
@click.option("--variant", type=click.Choice(["standard", "volume_control"]),
              default="standard", show_default=True)
@click.option("--planner", "backend", type=click.Choice(["scripted", "http_chat"]),
              default=None)
@click.option("--endpoint", default=None)
@click.option("--model", default=None)
@click.option("--script", default=None)
@click.option("--agent", "agent_backend", type=click.Choice(["stub", "remote"]), default=None)
@click.option("--agent-endpoint", default=None)
@click.pass_obj
def cmd_chat(state: CliState, store_dir, duration, variant, backend, endpoint, model,
             script, agent_backend, agent_endpoint):
    """Interactive turn loop: read a message, plan, render, repeat."""
    engine = SessionEngine(
        SessionStore(store_dir),
        _planner_config(state, backend, endpoint, model, script),
        _agent(state, agent_backend, agent_endpoint),
    )
    session = engine.create_session(
        SessionConfig(total_duration=duration, template_variant=variant)
    )
    click.echo(f"session {session.id} ({duration:.0f}s timeline); empty line quits")
    while True:
        try:
            message = input("you> ")
        except EOFError:
            break
        if not message.strip():
            break
        turn = engine.take_turn(session.id, message)
        if turn.status == "ok":
            audio = engine.store.turn_audio_path(session.id, turn.index)
            click.echo(f"turn {turn.index}: {len(turn.plan.steps)} steps -> {audio}")
            for i, step in enumerate(turn.plan.steps):
                volume = f" @ {step.volume:g} dB" if step.volume is not None else ""
                click.echo(
                    f"  {i + 1}. [{step.start_time:g}-{step.end_time:g}s]"
                    f" {step.description}{volume}"
                )
        else:
            click.echo(f"turn {turn.index}: {turn.status}")


@cli.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8765, show_default=True)
@click.option("--store", "store_dir", type=click.Path(file_okay=False), default="./sessions")
@click.option("--planner", "backend", type=click.Choice(["scripted", "http_chat"]),
              default=None)
@click.option("--endpoint", default=None)
@click.option("--model", default=None)
@click.option("--script", default=None)
@click.option("--agent", "agent_backend", type=click.Choice(["stub", "remote"]), default=None)
@click.option("--agent-endpoint", default=None)
@click.option("--static", "static_dir", type=click.Path(file_okay=False), default=None,
              help="Web UI bundle to serve at /.")
@click.option("--workers", type=int, default=2, show_default=True,
              help="Per-turn render concurrency.")
@click.pass_obj
def cmd_serve(state: CliState, host, port, store_dir, backend, endpoint, model, script,
              agent_backend, agent_endpoint, static_dir, workers):
    """Run the HTTP session API until signaled."""
    import uvicorn

    from .service import create_app

    engine = SessionEngine(
        SessionStore(store_dir),
        _planner_config(state, backend, endpoint, model, script),
        _agent(state, agent_backend, agent_endpoint),
        render_workers=workers,
    )
    app = create_app(engine, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")


@cli.command("loudness")
@click.argument("wav_path", type=click.Path(exists=True, dir_okay=False))
@click.pass_obj
def cmd_loudness(state: CliState, wav_path):
    """Measure the gated integrated loudness of a WAV file."""
    measurement = measure_loudness(read_wav(wav_path))
    loudness = measurement.integrated_loudness
    text = "-inf LUFS (silence)" if loudness == SILENCE_LUFS else f"{loudness:.2f} LUFS"
    _emit(
        state,
        {
            "integrated_loudness": None if loudness == SILENCE_LUFS else loudness,
            "gated": measurement.gated,
            "sample_peak_dbfs": (
                None if measurement.sample_peak == SILENCE_LUFS else measurement.sample_peak
            ),
        },
        f"{text}  (sample peak "
        + ("-inf" if measurement.sample_peak == SILENCE_LUFS
           else f"{measurement.sample_peak:.2f}")
        + " dBFS)",
    )


@cli.command("tokenize")
@click.argument("feature_file", type=click.Path(exists=True, dir_okay=False))
@click.argument("codebook_file", type=click.Path(exists=True, dir_okay=False))
@click.pass_obj
def cmd_tokenize(state: CliState, feature_file, codebook_file):
    """Quantize a feature file against a codebook; write the token string."""
    frames, frame_rate = read_features(feature_file)
    centroids, _ = read_features(codebook_file)
    tokens = quantize(FrameSequence(frames, frame_rate), Codebook(centroids))
    text = encode_token_string(tokens.indices, num_codes=centroids.shape[0])
    out_path = state.out_dir / (Path(feature_file).stem + ".tokens")
    out_path.write_text(text + "\n")
    _emit(
        state,
        {"tokens": len(tokens.indices), "file": str(out_path)},
        f"{len(tokens.indices)} tokens -> {out_path}",
    )


@cli.command("eval")
@click.argument("manifest_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--tolerance", type=float, default=0.1, show_default=True)
@click.pass_obj
def cmd_eval(state: CliState, manifest_file, tolerance):
    """Run onset and similarity metrics over a corpus manifest."""
    manifest_path = Path(manifest_file)
    manifest = json.loads(manifest_path.read_text())
    report = evaluate_corpus(
        manifest, base_dir=manifest_path.parent, tolerance=tolerance,
        config=OnsetConfig(),
    )
    json_path = state.out_dir / "metrics.json"
    table_path = state.out_dir / "metrics.txt"
    json_path.write_text(json.dumps(report.to_json_dict(), indent=2))
    table_path.write_text(report.to_table() + "\n")
    _emit(state, report.to_json_dict(), report.to_table())


@cli.command("selftest")
@click.pass_obj
def cmd_selftest(state: CliState):
    """Run the attention and token-codec invariant suites."""
    ok = run_selftest(echo=click.echo)
    if not ok:
        raise SystemExit(1)
    click.echo("all invariants hold")


def main() -> None:
    try:
        cli(standalone_mode=False)
    except click.exceptions.Abort:
        sys.exit(130)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except click.ClickException as exc:
        exc.show()
        sys.exit(2)
    except EngineError as exc:
        click.echo(f"error[{exc.code}]: {exc}", err=True)
        sys.exit(exit_code_for(exc))
    except SystemExit:
        raise
    sys.exit(0)


if __name__ == "__main__":
    main()
