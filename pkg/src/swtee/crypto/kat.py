"""NIST LWC known-answer file parsing and checking.

AEAD records carry ``Count/Key/Nonce/PT/AD/CT`` (CT is ciphertext || tag),
hash records carry ``Count/Msg/MD``. Records are blank-line separated.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from . import TAG_BYTES, AlgId, aead_decrypt, aead_encrypt, digest
from ..errors import AuthFailure

AEAD_FILES = {
    "LWC_AEAD_KAT_128_128_xoodyak.txt": AlgId.XOODYAK,
    "LWC_AEAD_KAT_128_128_isap_a_128a.txt": AlgId.ISAP,
}
HASH_FILES = {"LWC_HASH_KAT_256_xoodyak.txt"}


def parse_kat(text: str) -> list[dict[str, str]]:
    records: list[dict[str, str]] = []
    current: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            if current:
                records.append(current)
                current = {}
            continue
        if line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'Name = value'")
        name, value = (x.strip() for x in line.split("=", 1))
        if name == "Count" and current:
            records.append(current)
            current = {}
        current[name] = value
    if current:
        records.append(current)
    return records


def _hex(s: str) -> bytes:
    return bytes.fromhex(s)


@dataclass
class KatResult:
    path: str
    kind: str
    total: int = 0
    failures: list[str] = field(default_factory=list)

    @property
    def passed(self) -> int:
        return self.total - len(self.failures)

    @property
    def ok(self) -> bool:
        return self.total > 0 and not self.failures


def check_aead_record(alg: AlgId, rec: dict[str, str]) -> bool:
    key, nonce, pt, ad = (_hex(rec[k]) for k in ("Key", "Nonce", "PT", "AD"))
    expected = _hex(rec["CT"])
    ct, tag = aead_encrypt(alg, key, nonce, ad, pt)
    if ct + tag != expected:
        return False
    try:
        return aead_decrypt(alg, key, nonce, ad, expected[:-TAG_BYTES], expected[-TAG_BYTES:]) == pt
    except AuthFailure:
        return False


def check_hash_record(rec: dict[str, str]) -> bool:
    return digest(_hex(rec["Msg"])) == _hex(rec["MD"])


def run_kat_file(path: Path, alg: AlgId | None = None) -> KatResult:
    records = parse_kat(path.read_text())
    is_hash = bool(records) and "MD" in records[0]
    result = KatResult(str(path), "hash" if is_hash else f"aead-{(alg or AEAD_FILES.get(path.name, AlgId.XOODYAK)).label}")
    for rec in records:
        result.total += 1
        if is_hash:
            ok = check_hash_record(rec)
        else:
            ok = check_aead_record(alg or AEAD_FILES.get(path.name, AlgId.XOODYAK), rec)
        if not ok:
            result.failures.append(rec.get("Count", "?"))
    return result


def run_kat_dir(directory: str | Path) -> list[KatResult]:
    """Check every known KAT file present in ``directory``."""
    directory = Path(directory)
    results = []
    for name in sorted(set(AEAD_FILES) | HASH_FILES):
        p = directory / name
        if p.exists():
            results.append(run_kat_file(p, AEAD_FILES.get(name)))
    return results
