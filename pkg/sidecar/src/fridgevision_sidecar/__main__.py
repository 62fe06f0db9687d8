"""CLI entry: ``python -m fridgevision_sidecar --config sidecar.json``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .server import ModelLoadError, SidecarConfig, serve

DEFAULT_CATEGORY_MAP = Path(__file__).parent / "category_map.json"


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fridgevision-sidecar")
    parser.add_argument("--config", help="sidecar config JSON")
    parser.add_argument("--model", help="model reference (overrides config)")
    parser.add_argument("--listen", help="stdio or socket:<port> (overrides config)")
    parser.add_argument("--category-map", help="category map JSON (overrides config)")
    args = parser.parse_args(argv)

    try:
        if args.config:
            cfg = SidecarConfig.from_json(Path(args.config).read_bytes())
        else:
            cfg = SidecarConfig(
                category_map=json.loads(DEFAULT_CATEGORY_MAP.read_text()))
        if args.model:
            cfg.model = args.model
        if args.listen:
            cfg.listen = args.listen
        if args.category_map:
            cfg.category_map = json.loads(Path(args.category_map).read_text())
    except (ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    logging.basicConfig(stream=sys.stderr, level=logging.INFO)
    try:
        serve(cfg)
    except ModelLoadError as exc:
        print(f"model load failure: {exc}", file=sys.stderr)
        return 3
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    sys.exit(main())
