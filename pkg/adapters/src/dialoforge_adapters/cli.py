"""Adapter command line: serve a component or run one study trial."""

from __future__ import annotations

import argparse
import sys

from .config import load_adapter_config
from .server import ComponentServer


def main(argv=None):
    parser = argparse.ArgumentParser(prog="dialoforge-adapter")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the protocol server")
    p.add_argument("--config", required=True, help="AdapterConfig JSON file")
    p.add_argument("--tcp", default=None, metavar="HOST:PORT",
                   help="serve over TCP instead of stdio")
    p.add_argument("--max-connections", type=int, default=None)

    args = parser.parse_args(argv)
    config = load_adapter_config(args.config)
    server = ComponentServer(config)
    if args.tcp:
        host, port = args.tcp.rsplit(":", 1)
        server.serve_tcp(host, int(port), args.max_connections)
    else:
        server.serve_stdio()
    return 0


if __name__ == "__main__":
    sys.exit(main())
