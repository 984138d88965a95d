"""
TowerPlan - export command
Convert a text raster into a graymap image with a scale sidecar.
"""

import argparse
from pathlib import Path

from towerplan.services.field_io_service import FieldIOService
from towerplan.services.report_service import ReportService


def register(subparsers, parent: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("export", parents=[parent], help="raster to portable graymap")
    parser.add_argument("raster", help="raster in the field exchange text format")
    parser.add_argument("--image", default=None, help="output image (default: <out>/<raster name>.pgm)")
    parser.add_argument("--unit", default="", help="unit recorded in the scale sidecar")
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace) -> int:
    _, values = FieldIOService.read_text(args.raster)
    image = Path(args.image) if args.image else Path(args.out) / (Path(args.raster).stem + ".pgm")
    path, sidecar = ReportService.export_graymap(values, image, unit=args.unit)
    print(f"{path} ({sidecar.name})")
    return 0
