import argparse
import logging

from app.models.code import code_props
from app.models.dsl import inline_code
from app.models.references import REFERENCES_DIR, load_reference_code, load_reference_task, reference_names

logger = logging.getLogger(__name__)


def references_command(args: argparse.Namespace):
    listing = []
    for name in reference_names(args.dir):
        code = load_reference_code(name, args.dir)
        props = code_props(code)
        listing.append({
            "name": name,
            "dialect": code.dialect.value,
            "code": inline_code(code),
            "size": props.size,
            "depth": props.depth,
            "struct": props.struct_sig,
            "hasTask": load_reference_task(name, args.dir) is not None,
        })
    return listing


def register(subparsers) -> None:
    parser = subparsers.add_parser("references", help="list the bundled reference codes")
    parser.add_argument("--dir", default=REFERENCES_DIR)
    parser.set_defaults(handler=references_command)
