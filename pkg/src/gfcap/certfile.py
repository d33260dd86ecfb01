"""Plain-text certificate records.

One ``key=value`` pair per line; ``#`` starts a comment.  Keys:

``alphas``, ``betas``
    noise model, semicolon separated (optional when the model is given
    separately).
``P``
    power budget (optional, as above).
``pattern``
    multiplicities of the zeros, semicolon separated, in the order of ``x``.
``x``
    zeros inside the disk, semicolon separated complex numbers ``a+bj``.
``y``
    coefficient blocks, one per zero, separated by ``|``; entries within a
    block separated by ``;``.
``lambda``
    the orthogonality multiplier.
``r``
    outer roots, semicolon separated.
``capacity``
    capacity in nats (informational).
``residual.<name>``
    residuals recorded when the certificate was produced (informational).
"""

from __future__ import annotations

from .certsolve import CertificateSolution, MultiplicityPattern
from .spectra import ArmaModel

__all__ = ["CertificateFormatError", "format_complex", "dump_certificate", "load_certificate"]

REQUIRED = ("pattern", "x", "y", "lambda", "r")
HEADER = "# gfcap certificate v1"


class CertificateFormatError(ValueError):
    pass


def format_complex(z):
    z = complex(z)
    return f"{z.real:.17g}{z.imag:+.17g}j"


def _join(values):
    return ";".join(format_complex(v) for v in values)


def dump_certificate(cert, model=None, P=None):
    """Serialise a certificate to text."""
    lines = [HEADER]
    if model is not None:
        lines.append("alphas=" + ";".join(repr(float(a)) for a in model.alphas))
        lines.append("betas=" + ";".join(repr(float(b)) for b in model.betas))
    if P is not None:
        lines.append(f"P={float(P)!r}")
    lines.append("pattern=" + ";".join(str(m) for m in cert.multiplicities))
    lines.append("x=" + _join(cert.x))
    lines.append("y=" + "|".join(_join(block) for block in cert.y))
    lines.append(f"lambda={float(cert.lam)!r}")
    lines.append("r=" + _join(cert.outer_roots))
    try:
        lines.append(f"capacity={cert.capacity!r}")
    except ValueError:
        pass
    for key in sorted(cert.residual_report):
        val = cert.residual_report[key]
        if isinstance(val, float) and ("residual" in key or key in ("conj_closure", "output_spectrum_mismatch")):
            lines.append(f"residual.{key}={val!r}")
    return "\n".join(lines) + "\n"


def _parse_complex_list(text, key):
    text = text.strip()
    if not text:
        return []
    try:
        return [complex(part.strip()) for part in text.split(";")]
    except ValueError as exc:
        raise CertificateFormatError(f"bad complex number in {key!r}: {exc}") from None


def _parse_float_list(text, key):
    try:
        return [float(part) for part in text.split(";") if part.strip()]
    except ValueError as exc:
        raise CertificateFormatError(f"bad number in {key!r}: {exc}") from None


def load_certificate(text):
    """Parse a certificate; returns ``(cert, model_or_None, P_or_None)``."""
    fields = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CertificateFormatError(f"line {lineno}: expected key=value")
        key, value = line.split("=", 1)
        key = key.strip()
        if key in fields:
            raise CertificateFormatError(f"line {lineno}: duplicate key {key!r}")
        fields[key] = value.strip()
    missing = [k for k in REQUIRED if k not in fields]
    if missing:
        raise CertificateFormatError("missing keys: " + ", ".join(missing))
    try:
        pattern = [int(v) for v in fields["pattern"].split(";")]
    except ValueError:
        raise CertificateFormatError("pattern must be integers") from None
    x = _parse_complex_list(fields["x"], "x")
    blocks = fields["y"].split("|")
    y = [tuple(_parse_complex_list(b, "y")) for b in blocks]
    if len(x) != len(pattern) or len(y) != len(pattern):
        raise CertificateFormatError("pattern, x and y disagree in length")
    if any(len(b) != m for b, m in zip(y, pattern)):
        raise CertificateFormatError("y block sizes do not match the pattern")
    try:
        lam = float(fields["lambda"])
    except ValueError:
        raise CertificateFormatError("lambda must be a real number") from None
    r = _parse_complex_list(fields["r"], "r")
    try:
        mp = MultiplicityPattern(tuple(pattern))
    except ValueError as exc:
        raise CertificateFormatError(str(exc)) from None
    cert = CertificateSolution(mp, tuple(x), tuple(y), lam, tuple(r))
    model = None
    if "alphas" in fields and "betas" in fields:
        try:
            model = ArmaModel(
                tuple(_parse_float_list(fields["alphas"], "alphas")),
                tuple(_parse_float_list(fields["betas"], "betas")),
            )
        except ValueError as exc:
            raise CertificateFormatError(str(exc)) from None
    P = None
    if "P" in fields:
        try:
            P = float(fields["P"])
        except ValueError:
            raise CertificateFormatError("P must be a number") from None
    return cert, model, P
