"""LabelImg/Pascal-VOC XML annotation ingest.

Coordinate convention: after parsing, boxes are 0-based pixel indices with
xmin/ymin inclusive and xmax/ymax exclusive. Tools that emit 1-based
inclusive coordinates are handled by the `one_based` flag, which shifts
xmin/ymin down by one (the inclusive 1-based max then coincides with the
exclusive 0-based max). Boxes reaching past the image are clamped, not
rejected.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, InvalidBox, MalformedXml, MissingField


@dataclass(frozen=True)
class BBox:
    xmin: int
    ymin: int
    xmax: int
    ymax: int

    def validate(self) -> None:
        if min(self.xmin, self.ymin, self.xmax, self.ymax) < 0:
            raise InvalidBox(f"negative coordinate in {self}")
        if self.xmin >= self.xmax or self.ymin >= self.ymax:
            raise InvalidBox(f"degenerate box {self}")

    @property
    def width(self) -> int:
        return self.xmax - self.xmin

    @property
    def height(self) -> int:
        return self.ymax - self.ymin


@dataclass(frozen=True)
class AnnotatedObject:
    label: str
    box: BBox


@dataclass
class Annotation:
    image_filename: str
    image_width: int
    image_height: int
    objects: list[AnnotatedObject] = field(default_factory=list)

    def validate(self) -> None:
        if self.image_width <= 0 or self.image_height <= 0:
            raise InvalidBox(
                f"image size {self.image_width}x{self.image_height} not positive"
            )
        for obj in self.objects:
            obj.box.validate()
            if obj.box.xmax > self.image_width or obj.box.ymax > self.image_height:
                raise InvalidBox(f"{obj.box} outside {self.image_width}x{self.image_height}")
            if not obj.label:
                raise InvalidBox("empty label")


def _require(parent: ET.Element, tag: str, context: str) -> ET.Element:
    node = parent.find(tag)
    if node is None:
        raise MissingField(f"missing <{tag}> in <{context}>")
    return node


def _int_text(parent: ET.Element, tag: str, context: str) -> int:
    node = _require(parent, tag, context)
    try:
        # LabelImg sometimes writes floats; truncate toward zero like int().
        return int(float(node.text))
    except (TypeError, ValueError):
        raise MissingField(f"<{tag}> in <{context}> is not a number: {node.text!r}")


def parse_voc_xml(xml_text: str, one_based: bool = False) -> Annotation:
    """Parse one VOC annotation document into an Annotation.

    Objects are returned in document order. Boxes are clamped to the image
    bounds and then validated; a box that is empty after clamping raises
    InvalidBox.
    """
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        raise MalformedXml(f"unparseable annotation XML: {exc}") from exc
    if root.tag != "annotation":
        raise MalformedXml(f"root element is <{root.tag}>, expected <annotation>")

    filename_node = _require(root, "filename", "annotation")
    if not filename_node.text or not filename_node.text.strip():
        raise MissingField("empty <filename>")
    filename = filename_node.text.strip()

    size = _require(root, "size", "annotation")
    width = _int_text(size, "width", "size")
    height = _int_text(size, "height", "size")
    if width <= 0 or height <= 0:
        raise InvalidBox(f"declared size {width}x{height} not positive")

    objects: list[AnnotatedObject] = []
    for obj_node in root.findall("object"):
        name_node = _require(obj_node, "name", "object")
        label = (name_node.text or "").strip()
        if not label:
            raise MissingField("empty <name> in <object>")
        bnd = _require(obj_node, "bndbox", "object")
        xmin = _int_text(bnd, "xmin", "bndbox")
        ymin = _int_text(bnd, "ymin", "bndbox")
        xmax = _int_text(bnd, "xmax", "bndbox")
        ymax = _int_text(bnd, "ymax", "bndbox")
        if one_based:
            xmin -= 1
            ymin -= 1
        box = BBox(
            xmin=max(0, xmin),
            ymin=max(0, ymin),
            xmax=min(width, xmax),
            ymax=min(height, ymax),
        )
        box.validate()
        objects.append(AnnotatedObject(label=label, box=box))

    annotation = Annotation(filename, width, height, objects)
    annotation.validate()
    return annotation


def annotation_to_xml(annotation: Annotation) -> str:
    """Serialize an Annotation back to VOC XML (0-based exclusive boxes)."""
    root = ET.Element("annotation")
    ET.SubElement(root, "filename").text = annotation.image_filename
    size = ET.SubElement(root, "size")
    ET.SubElement(size, "width").text = str(annotation.image_width)
    ET.SubElement(size, "height").text = str(annotation.image_height)
    ET.SubElement(size, "depth").text = "1"
    for obj in annotation.objects:
        node = ET.SubElement(root, "object")
        ET.SubElement(node, "name").text = obj.label
        bnd = ET.SubElement(node, "bndbox")
        ET.SubElement(bnd, "xmin").text = str(obj.box.xmin)
        ET.SubElement(bnd, "ymin").text = str(obj.box.ymin)
        ET.SubElement(bnd, "xmax").text = str(obj.box.xmax)
        ET.SubElement(bnd, "ymax").text = str(obj.box.ymax)
    ET.indent(root)
    return ET.tostring(root, encoding="unicode")


def extract_crops(
    image: np.ndarray, annotation: Annotation
) -> list[tuple[str, np.ndarray]]:
    """Cut one (label, crop) pair per annotated object.

    Crop (r, c) equals source pixel (ymin + r, xmin + c); dimensions are
    (ymax - ymin) x (xmax - xmin).
    """
    h, w = image.shape[:2]
    if (w, h) != (annotation.image_width, annotation.image_height):
        raise DimensionMismatch(
            f"image is {w}x{h} but annotation declares "
            f"{annotation.image_width}x{annotation.image_height}"
        )
    crops = []
    for obj in annotation.objects:
        b = obj.box
        crops.append((obj.label, image[b.ymin : b.ymax, b.xmin : b.xmax].copy()))
    return crops


@dataclass(frozen=True)
class ScanIssue:
    path: str
    kind: str  # "parse" or "missing-image"
    message: str


@dataclass
class ScanResult:
    pairs: list[tuple[Path, Annotation]]
    issues: list[ScanIssue]


def scan_dataset(
    image_dir: str | Path, annotation_dir: str | Path, one_based: bool = False
) -> ScanResult:
    """Pair every .xml annotation with its referenced image file.

    Per-file parse failures and missing images are reported in
    ScanResult.issues without aborting the scan. Pairs come back sorted by
    annotation filename.
    """
    image_dir = Path(image_dir)
    annotation_dir = Path(annotation_dir)
    pairs: list[tuple[Path, Annotation]] = []
    issues: list[ScanIssue] = []
    for xml_path in sorted(annotation_dir.glob("*.xml")):
        try:
            annotation = parse_voc_xml(xml_path.read_text(), one_based=one_based)
        except (MalformedXml, MissingField, InvalidBox) as exc:
            issues.append(ScanIssue(str(xml_path), "parse", str(exc)))
            continue
        image_path = image_dir / annotation.image_filename
        if not image_path.is_file():
            issues.append(
                ScanIssue(str(xml_path), "missing-image", f"no such image: {image_path}")
            )
            continue
        pairs.append((image_path, annotation))
    return ScanResult(pairs=pairs, issues=issues)


def write_crop_manifest(
    path: str | Path, records: list[tuple[str, str, BBox]]
) -> None:
    """Write one line per crop: source file, label, box corners (tab-separated)."""
    lines = ["crops v1"]
    for source, label, box in records:
        lines.append(f"{source}\t{label}\t{box.xmin}\t{box.ymin}\t{box.xmax}\t{box.ymax}")
    Path(path).write_text("\n".join(lines) + "\n")
