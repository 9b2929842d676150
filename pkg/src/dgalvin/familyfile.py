"""On-disk family format.

A file is a block of ``# key=value`` header lines followed by one member
set per line. Two body encodings exist:

``text``
    the members' elements in increasing order, 1-based, separated by single
    spaces (``base=1`` in the header); the empty set is written ``-``;
``compact``
    the member mask as lowercase hexadecimal, zero-padded to ``ceil(n/4)``
    digits, where bit ``e`` of the integer is element ``e`` (``base=0``).

Members are written in increasing mask order and the header holds no
timing or host information, so identical families give identical bytes.
"""
from __future__ import annotations

from pathlib import Path

from .core import FAMILY_VARIANTS, GalvinError, GalvinFamily, elements_of, mask_of

FORMAT_VERSION = 1
MAGIC = "dgalvin-family"
ENCODINGS = ("text", "compact")


class FormatError(GalvinError):
    """Malformed family file; ``line`` is 1-based (0 when not line specific)."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


def serialize(fam: GalvinFamily, encoding: str = "text") -> str:
    if encoding not in ENCODINGS:
        raise ValueError(f"unknown encoding {encoding!r}")
    header = {
        "version": FORMAT_VERSION,
        "n": fam.n,
        "d": fam.d,
        "variant": fam.variant,
        "seed": fam.seed,
        "copies": fam.copies,
        "raw_count": fam.raw_count,
        "complements": "implicit" if fam.implicit_complements else "explicit",
        "encoding": encoding,
        "base": 1 if encoding == "text" else 0,
        "size": len(fam),
    }
    lines = [f"# {MAGIC}"]
    lines += [f"# {k}={v}" for k, v in header.items()]
    if encoding == "text":
        lines += [" ".join(str(e + 1) for e in elements_of(m)) or "-" for m in fam.masks]
    else:
        width = -(-fam.n // 4)
        lines += [format(m, f"0{width}x") for m in fam.masks]
    return "\n".join(lines) + "\n"


_INT_KEYS = ("version", "n", "d", "seed", "copies", "raw_count", "base", "size")
_REQUIRED = ("version", "n", "d", "encoding")


def parse(text: str) -> GalvinFamily:
    header: dict[str, str] = {}
    body: list[tuple[int, str]] = []
    lines = text.splitlines()
    if not lines or lines[0].strip() != f"# {MAGIC}":
        raise FormatError(1, f"missing '# {MAGIC}' marker")
    for no, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if body:
                raise FormatError(no, "header line after the first member")
            key, sep, value = line[1:].strip().partition("=")
            if not sep:
                raise FormatError(no, f"expected key=value, got {line!r}")
            header[key.strip()] = value.strip()
        else:
            body.append((no, line))

    for key in _REQUIRED:
        if key not in header:
            raise FormatError(0, f"header lacks {key!r}")
    meta: dict[str, int] = {}
    for key in _INT_KEYS:
        if key in header:
            try:
                meta[key] = int(header[key])
            except ValueError:
                raise FormatError(0, f"header {key}={header[key]!r} is not an integer") from None
    if meta["version"] != FORMAT_VERSION:
        raise FormatError(0, f"unsupported format version {meta['version']}")
    n, encoding = meta["n"], header["encoding"]
    if encoding not in ENCODINGS:
        raise FormatError(0, f"unknown encoding {encoding!r}")
    variant = header.get("variant", "standard")
    if variant not in FAMILY_VARIANTS:
        raise FormatError(0, f"unknown variant {variant!r}")
    base = meta.get("base", 1 if encoding == "text" else 0)

    masks = []
    width = -(-n // 4)
    for no, line in body:
        if encoding == "text":
            try:
                elements = [] if line == "-" else [int(tok) - base for tok in line.split()]
            except ValueError:
                raise FormatError(no, f"non-integer element in {line!r}") from None
            if any(not 0 <= e < n for e in elements):
                raise FormatError(no, f"element outside 1..{n}" if base else f"element outside 0..{n - 1}")
            if len(set(elements)) != len(elements):
                raise FormatError(no, "repeated element")
            masks.append(mask_of(elements))
        else:
            if len(line) != width or line != line.lower():
                raise FormatError(no, f"expected {width} lowercase hex digits, got {line!r}")
            try:
                m = int(line, 16)
            except ValueError:
                raise FormatError(no, f"not a hex mask: {line!r}") from None
            if m >> n:
                raise FormatError(no, f"mask has bits beyond n={n}")
            masks.append(m)
    if "size" in meta and meta["size"] != len(masks):
        raise FormatError(0, f"header announces {meta['size']} members, found {len(masks)}")

    return GalvinFamily(
        n=n,
        d=meta["d"],
        masks=tuple(masks),
        variant=variant,
        seed=meta.get("seed", 0),
        copies=meta.get("copies", 1),
        raw_count=meta.get("raw_count", len(masks)),
        implicit_complements=header.get("complements", "explicit") == "implicit",
    )


def write_family(path: str | Path, fam: GalvinFamily, encoding: str = "text") -> None:
    Path(path).write_bytes(serialize(fam, encoding).encode("ascii"))


def read_family(path: str | Path) -> GalvinFamily:
    try:
        text = Path(path).read_text(encoding="ascii")
    except UnicodeDecodeError as exc:
        raise FormatError(0, f"not an ASCII family file ({exc.reason} at byte {exc.start})") from None
    return parse(text)
