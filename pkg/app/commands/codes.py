import argparse
import logging

from app.commands.common import add_param_flags, params_from_args, read_code
from app.models.code import code_props
from app.models.dsl import code_to_json, inline_code, print_code
from app.models.mutation import build_sketch, enumerate_mutations, stage_counts

logger = logging.getLogger(__name__)


def parse_command(args: argparse.Namespace):
    """Canonical text, or the JSON AST with the code's properties"""
    code = read_code(args.code, args.dialect)
    if not args.json:
        return print_code(code)
    props = code_props(code)
    return {
        "ast": code_to_json(code),
        "props": {
            "blocks": sorted(props.blocks),
            "size": props.size,
            "depth": props.depth,
            "struct": props.struct_sig,
        },
    }


def mutate_command(args: argparse.Namespace):
    code = read_code(args.code, args.dialect)
    params = params_from_args(args)
    sketch = build_sketch(code, params.delta_size, params.delta_iter)
    if args.count_only:
        return stage_counts(sketch).to_json()
    codes = enumerate_mutations(sketch, args.stage)
    logger.info(f"{len(codes)} mutations of {inline_code(code)}")
    return "\n".join(print_code(c) for c in codes)


def register(subparsers) -> None:
    parser = subparsers.add_parser("parse", help="parse a code file and print it canonically")
    parser.add_argument("code")
    parser.add_argument("--dialect", default="auto", choices=["auto", "hoc", "karel"])
    parser.add_argument("--json", action="store_true", help="print the JSON AST and properties")
    parser.set_defaults(handler=parse_command)

    parser = subparsers.add_parser("mutate", help="enumerate mutated codes")
    parser.add_argument("code")
    parser.add_argument("--dialect", default="auto", choices=["auto", "hoc", "karel"])
    parser.add_argument("--stage", default="all", choices=["all", "d0", "d01"])
    parser.add_argument("--count-only", action="store_true", help="print the stage counts as JSON")
    add_param_flags(parser, "delta_size", "delta_iter")
    parser.set_defaults(handler=mutate_command)
