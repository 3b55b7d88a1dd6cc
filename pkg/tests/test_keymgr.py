import pytest
from hypothesis import given
from hypothesis import strategies as st

from swtee.errors import DegenerateKey, StaleEpoch, UnsealFailure
from swtee.keymgr import (
    DhKeyPair, Keystore, SessionKey, derive_key, dh_keygen, dh_shared, parse_offer, renewal_complete,
    renewal_initiate, seal_keystore, session_from_shared, unseal_keystore,
)

from conftest import seq

P = 2**255 - 19
A24 = 121665


def ladder(k: bytes, u: bytes) -> bytes:
    """Straight Montgomery-ladder X25519, used only as a test oracle."""
    n = bytearray(k)
    n[0] &= 248
    n[31] &= 127
    n[31] |= 64
    scalar = int.from_bytes(n, "little")
    x1 = int.from_bytes(u, "little") & ((1 << 255) - 1)
    x2, z2, x3, z3, swap = 1, 0, x1, 1, 0
    for t in reversed(range(255)):
        bit = (scalar >> t) & 1
        swap ^= bit
        if swap:
            x2, x3, z2, z3 = x3, x2, z3, z2
        swap = bit
        a, b = (x2 + z2) % P, (x2 - z2) % P
        aa, bb = a * a % P, b * b % P
        e = (aa - bb) % P
        c, d = (x3 + z3) % P, (x3 - z3) % P
        da, cb = d * a % P, c * b % P
        x3 = (da + cb) ** 2 % P
        z3 = x1 * (da - cb) ** 2 % P
        x2 = aa * bb % P
        z2 = e * (aa + A24 * e) % P
    if swap:
        x2, z2 = x3, z3
    return (x2 * pow(z2, P - 2, P) % P).to_bytes(32, "little")


BASE = (9).to_bytes(32, "little")
RFC_VECTORS = [
    ("a546e36bf0527c9d3b16154b82465edd62144c0ac1fc5a18506a2244ba449ac4",
     "e6db6867583030db3594c1a424b15f7c726624ec26b3353b10a903a6d0ab1c4c",
     "c3da55379de9c6908e94ea4df28d084f32eccf03491c71f754b4075577a28552"),
    ("4b66e9d4d1b4673c5ad22691957d6af5c11b6421e0ea01d42ca4169e7918ba0d",
     "e5210f12786811d3f4b7959d0538ae2c31dbe7106fc03c3efc4cd549c715a493",
     "95cbde9476e8907d7aade45cb4b873f88b595a68799fa152e6f8f7647aac7957"),
]
ALICE = "77076d0a7318a57d3c16c17251b26645df4c2f87ebc0992ab177fba51db92c2a"
BOB = "5dab087e624a8a4b79e17f8b83800ee66f3bb1292618b6fd1c2f8b27ff88e0eb"
ALICE_PUBLIC = "8520f0098930a754748b7ddcb43ef75a0dbf3a0d26381af4eba4a98eaa9b4e6a"
ALICE_BOB_SHARED = "4a5d9d5ba4ce2de1728e3bf480350f25e07e21c947d19e3376f09b3c1e161742"
ORDER8_A = "e0eb7a7c3b41b8ae1656e3faf19fc46ada098deb9c32b1fd866205165f49b800"
ORDER8_B = "5f9c95bca3508c24b1d0b1559c83ef5b04445cc4581c8e86d8224eddd09f1157"
LOW_ORDER = [
    bytes(32),
    (1).to_bytes(32, "little"),
    bytes.fromhex(ORDER8_A),
    bytes.fromhex(ORDER8_B),
    (P - 1).to_bytes(32, "little"),
    P.to_bytes(32, "little"),
    (P + 1).to_bytes(32, "little"),
]


class TestX25519:
    @pytest.mark.parametrize("k,u,out", RFC_VECTORS)
    def test_oracle_reproduces_published_vectors(self, k, u, out):
        assert ladder(bytes.fromhex(k), bytes.fromhex(u)).hex() == out

    @pytest.mark.parametrize("k,u,out", RFC_VECTORS)
    def test_published_vectors(self, k, u, out):
        assert dh_shared(bytes.fromhex(k), bytes.fromhex(u)).hex() == out

    def test_key_agreement_example(self):
        a, b = dh_keygen(bytes.fromhex(ALICE)), dh_keygen(bytes.fromhex(BOB))
        assert a.public == ladder(a.private, BASE)
        assert b.public == ladder(b.private, BASE)
        assert a.public.hex() == ALICE_PUBLIC
        shared = dh_shared(a.private, b.public)
        assert shared.hex() == ALICE_BOB_SHARED
        assert shared == dh_shared(b.private, a.public) == ladder(a.private, b.public)

    @given(st.binary(min_size=32, max_size=32), st.binary(min_size=32, max_size=32))
    def test_matches_oracle_and_is_symmetric(self, ra, rb):
        a, b = dh_keygen(ra), dh_keygen(rb)
        assert a.public == ladder(ra, BASE)
        s = dh_shared(a.private, b.public)
        assert s == dh_shared(b.private, a.public) == ladder(ra, b.public)

    @pytest.mark.parametrize("point", LOW_ORDER, ids=lambda p: p.hex()[:8])
    def test_low_order_points_rejected(self, point):
        k = bytes.fromhex(ALICE)
        assert ladder(k, point) == bytes(32)
        with pytest.raises(DegenerateKey):
            dh_shared(k, point)

    def test_input_lengths(self):
        with pytest.raises(ValueError):
            dh_keygen(bytes(31))
        with pytest.raises(ValueError):
            dh_shared(bytes(32), bytes(31))


class TestDerivation:
    def test_frozen_vector(self):
        key = derive_key(seq(32), b"session", seq(16), 1)
        assert key.hex().upper() == "105D47215C04767C1ABED202D7B773FB"

    def test_labels_and_epochs_separate_keys(self):
        shared, nid = seq(32), seq(16)
        keys = {derive_key(shared, lbl, nid, e) for lbl in (b"session", b"app-image") for e in range(4)}
        assert len(keys) == 8

    def test_session_bundle(self):
        s = session_from_shared(seq(32), seq(16), 1, 1234)
        assert s.key == derive_key(seq(32), b"session", seq(16), 1)
        assert s.image_key == derive_key(seq(32), b"app-image", seq(16), 1)
        assert (s.epoch, s.established_at) == (1, 1234)

    def test_repr_hides_key_material(self):
        s = session_from_shared(seq(32), seq(16), 1, 0)
        assert s.key.hex() not in repr(s)
        pair = dh_keygen(seq(32))
        assert pair.private.hex() not in repr(pair)

    def test_rejects_unknown_label_and_bad_node_id(self):
        with pytest.raises(ValueError):
            derive_key(seq(32), b"other", seq(16), 0)
        with pytest.raises(ValueError):
            derive_key(seq(32), b"session", seq(15), 0)


class TestRenewal:
    def test_both_sides_agree_on_next_epoch(self):
        nid = seq(16)
        ga, offer_g = renewal_initiate(5, seq(32))
        na, offer_n = renewal_initiate(5, bytes(range(1, 33)))
        assert parse_offer(offer_g) == (5, ga.public)
        s_gw = renewal_complete(ga, offer_n, nid, 5, 100)
        s_node = renewal_complete(na, offer_g, nid, 5, 100)
        assert s_gw == s_node and s_gw.epoch == 6

    def test_stale_offer_rejected(self):
        ga, _ = renewal_initiate(5, seq(32))
        _, old_offer = renewal_initiate(4, bytes(range(1, 33)))
        with pytest.raises(StaleEpoch):
            renewal_complete(ga, old_offer, seq(16), 5, 0)

    def test_low_order_offer_rejected(self):
        ga, _ = renewal_initiate(0, seq(32))
        with pytest.raises(DegenerateKey):
            renewal_complete(ga, bytes(4) + bytes(32), seq(16), 0, 0)

    def test_offer_length(self):
        with pytest.raises(ValueError):
            parse_offer(bytes(35))


def _keystore() -> Keystore:
    ks = Keystore(b"node-under-test!")
    ks.dh_pairs["identity"] = dh_keygen(seq(32))
    ks.sessions["current"] = session_from_shared(seq(32), b"node-under-test!", 3, 99)
    ks.secrets["k_mem"] = seq(16)
    return ks


class TestKeystore:
    def test_round_trip(self):
        ks = _keystore()
        assert unseal_keystore(seal_keystore(ks, b"device secret"), b"device secret") == ks

    def test_fresh_nonce_each_seal(self):
        ks = _keystore()
        assert seal_keystore(ks, b"s") != seal_keystore(ks, b"s")

    def test_plaintext_not_visible(self):
        blob = seal_keystore(_keystore(), b"s")
        assert seq(16) not in blob and b"k_mem" not in blob

    def test_wrong_secret(self):
        with pytest.raises(UnsealFailure):
            unseal_keystore(seal_keystore(_keystore(), b"right"), b"wrong")

    def test_every_byte_flip_detected(self):
        blob = seal_keystore(_keystore(), b"s", nonce=bytes(16))
        for i in range(len(blob)):
            bad = bytearray(blob)
            bad[i] ^= 0x80
            with pytest.raises(UnsealFailure):
                unseal_keystore(bytes(bad), b"s")

    @pytest.mark.parametrize("n", [0, 10, 36, 52])
    def test_truncation(self, n):
        with pytest.raises(UnsealFailure):
            unseal_keystore(seal_keystore(_keystore(), b"s")[:n], b"s")

    def test_empty_keystore(self):
        ks = Keystore(bytes(16))
        assert unseal_keystore(seal_keystore(ks, b""), b"") == ks

    def test_dataclass_types(self):
        ks = unseal_keystore(seal_keystore(_keystore(), b"s"), b"s")
        assert isinstance(ks.dh_pairs["identity"], DhKeyPair)
        assert isinstance(ks.sessions["current"], SessionKey)
