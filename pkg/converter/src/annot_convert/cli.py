import argparse
import sys

from .mpii import convert_mpii


def build_parser():
    parser = argparse.ArgumentParser(
        prog="annot-convert",
        description="Convert an MPII release .mat container to canonical pose JSON.")
    parser.add_argument("input", help="release container (.mat)")
    parser.add_argument("output", help="JSON file to write")
    parser.add_argument("--split", choices=("train", "val"), default="train")
    parser.add_argument("--schema-check", action="store_true",
                        help="validate the output against the bundled schema")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        count = convert_mpii(args.input, args.output, split=args.split,
                             schema_check=args.schema_check)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {count} image(s) to {args.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
