"""Command-line interface.

Subcommands: ``serve`` (the daemon), ``suggest`` (one-shot invocation),
``prompt`` (print the exact serialized messages for golden tests and
debugging), ``label`` (headless field labeling for corpus diffing),
``replay`` (harness runs), and ``fixture`` (generate harness fixtures).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

from . import __version__, field_labeling, session_service
from .context_store import ContextBag
from .errors import FormfillError
from .form_model import FormSnapshot
from .llm_gateway import (
    Backend,
    RemoteApiBackend,
    ScriptedBackend,
    Transcript,
)
from .prompt_builder import ModelSpec, PromptConfig, build_prompt
from .replay_harness import (
    DataFormattingFixture,
    generate_fixture,
    run_replay,
    score_run,
)
from .suggestion_engine import SuggestionEngine

DEFAULT_STATE_DIR = os.path.expanduser("~/.local/state/formfill")
STATE_DIR_ENV = "FORMFILL_STATE_DIR"


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def prompt_config_from(config: dict) -> PromptConfig:
    table = config.get("model_table")
    if not table:
        return PromptConfig()
    specs = tuple(ModelSpec(m["name"], m["context_window"]) for m in table)
    return PromptConfig(model_table=specs)


def make_backend(args: argparse.Namespace, config: dict) -> Backend:
    name = args.backend
    if name == "remote_api":
        endpoint = config.get("endpoint")
        if not endpoint:
            raise FormfillError("remote_api backend needs an endpoint in the config file")
        return RemoteApiBackend(endpoint)
    if name == "scripted":
        if not args.transcript:
            raise FormfillError("scripted backend needs --transcript")
        return ScriptedBackend(Transcript.load(args.transcript))
    if name == "oracle":
        if not args.fixture:
            raise FormfillError("oracle backend needs --fixture")
        return DataFormattingFixture.load(args.fixture).oracle_backend()
    raise FormfillError(f"unknown backend {name!r}")


def _load_bag(path: str) -> ContextBag:
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    # accept either a bare bag or a full session-store document
    if "bag" in data:
        data = data["bag"]
    return ContextBag.from_dict(data)


def _load_snapshot(path: str) -> FormSnapshot:
    with open(path, encoding="utf-8") as f:
        return FormSnapshot.from_dict(json.load(f))


def cmd_label(args: argparse.Namespace) -> int:
    with open(args.file, encoding="utf-8") as f:
        html = f.read()
    for labeled in field_labeling.label_fields(html):
        print(f"{labeled.field_id}\t{labeled.name}\t{labeled.source}")
    return 0


def cmd_prompt(args: argparse.Namespace) -> int:
    bag = _load_bag(args.context)
    snapshot = _load_snapshot(args.form)
    config = prompt_config_from(load_config(args.config))
    prompt = build_prompt(bag, snapshot, suppress_edits=args.suppress_edits, config=config)
    print(render_prompt_text(prompt), end="")
    return 0


def render_prompt_text(prompt) -> str:
    """Stable textual rendering of a prompt, used by the golden suite."""
    lines = [f"model: {prompt.model.name}", f"token_count: {prompt.token_count}"]
    for i, message in enumerate(prompt.messages, start=1):
        lines.append(f"== message {i}: {message.role} ==")
        lines.append(message.content)
    return "\n".join(lines) + "\n"


def cmd_suggest(args: argparse.Namespace) -> int:
    bag = _load_bag(args.context)
    snapshot = _load_snapshot(args.form)
    config = load_config(args.config)
    backend = make_backend(args, config)
    engine = SuggestionEngine(backend, config=prompt_config_from(config))
    suggestions = engine.invoke(bag, snapshot)
    print(json.dumps(suggestions.to_dict(), indent=1, ensure_ascii=False))
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    backend = make_backend(args, config)
    service = session_service.SessionService(
        args.state_dir, backend, prompt_config=prompt_config_from(config)
    )
    session_service.serve(service, args.host, args.port)
    return 0


def cmd_fixture(args: argparse.Namespace) -> int:
    fixture = generate_fixture(args.seed, args.profiles)
    fixture.save(args.out)
    print(f"wrote {args.profiles} profiles to {args.out}")
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    fixture = DataFormattingFixture.load(args.fixture)
    config = load_config(args.config)
    if args.backend == "oracle":
        backend: Backend = fixture.oracle_backend()
    else:
        backend = make_backend(args, config)
    with tempfile.TemporaryDirectory(prefix="formfill-replay-") as state_dir:
        log = run_replay(
            fixture, backend, state_dir, prompt_config=prompt_config_from(config)
        )
    grid = score_run(log, fixture, run_id=f"seed-{args.seed}")
    with open(args.out, "w", encoding="utf-8") as f:
        f.write(grid.to_csv())
    if args.log_out:
        with open(args.log_out, "w", encoding="utf-8") as f:
            json.dump(log.to_dict(), f, indent=1, ensure_ascii=False)
    phone = grid.phone_success_ratio
    shirt = grid.shirt_success_ratio
    print(f"profiles scored: {len(grid.cells)}")
    print(f"phone success: {'n/a' if phone is None else f'{phone:.0%}'}")
    print(f"shirt success: {'n/a' if shirt is None else f'{shirt:.0%}'}")
    print(f"fallback contribution: {grid.fallback_contribution}")
    print(f"overeager suggestions: {grid.overeager_suggestions}")
    print(f"grid written to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="formfill", description=__doc__)
    parser.add_argument("--version", action="version", version=f"formfill {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_backend_args(p):
        p.add_argument(
            "--backend",
            choices=("remote_api", "scripted", "oracle"),
            default="scripted",
        )
        p.add_argument("--transcript", help="transcript file for the scripted backend")
        p.add_argument("--fixture", help="fixture file for the oracle backend")
        p.add_argument("--config", help="JSON config file (endpoint, model_table)")

    p_serve = sub.add_parser("serve", help="run the local suggestion daemon")
    p_serve.add_argument(
        "--state-dir",
        default=os.environ.get(STATE_DIR_ENV, DEFAULT_STATE_DIR),
        help="session store directory",
    )
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8737)
    add_backend_args(p_serve)
    p_serve.set_defaults(func=cmd_serve)

    p_suggest = sub.add_parser("suggest", help="one-shot suggestions for a saved bag/form")
    p_suggest.add_argument("--context", required=True, help="bag or session-store JSON file")
    p_suggest.add_argument("--form", required=True, help="form snapshot JSON file")
    add_backend_args(p_suggest)
    p_suggest.set_defaults(func=cmd_suggest)

    p_prompt = sub.add_parser("prompt", help="print the exact serialized prompt")
    p_prompt.add_argument("--context", required=True)
    p_prompt.add_argument("--form", required=True)
    p_prompt.add_argument("--suppress-edits", action="store_true")
    p_prompt.add_argument("--config")
    p_prompt.set_defaults(func=cmd_prompt)

    p_label = sub.add_parser("label", help="label form fields in an HTML file")
    p_label.add_argument("file")
    p_label.set_defaults(func=cmd_label)

    p_fixture = sub.add_parser("fixture", help="generate a data-formatting fixture")
    p_fixture.add_argument("--seed", type=int, default=0)
    p_fixture.add_argument("--profiles", type=int, default=51)
    p_fixture.add_argument("--out", required=True)
    p_fixture.set_defaults(func=cmd_fixture)

    p_replay = sub.add_parser("replay", help="replay a fixture and score a success grid")
    p_replay.add_argument("--fixture", required=True)
    p_replay.add_argument("--seed", type=int, default=0, help="run label for the grid")
    p_replay.add_argument("--out", required=True, help="grid CSV output path")
    p_replay.add_argument("--log-out", help="also write the invocation log JSON")
    p_replay.add_argument(
        "--backend", choices=("remote_api", "scripted", "oracle"), default="oracle"
    )
    p_replay.add_argument("--transcript")
    p_replay.add_argument("--config")
    p_replay.set_defaults(func=cmd_replay)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FormfillError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
