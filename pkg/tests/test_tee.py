"""Sealing simulation: key derivation, blob format, policies, attestation."""

import random
import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from sealvault import tee
from sealvault.errors import (
    AuthenticationFailure,
    MalformedBlob,
    PayloadTooLarge,
    SvnViolation,
)

MRENCLAVE = tee.SealingPolicy.MRENCLAVE
MRSIGNER = tee.SealingPolicy.MRSIGNER

# SHA-256 of the empty string, from an independent published constant
SHA256_EMPTY = bytes.fromhex(
    "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
)


class TestCreatePlatform:
    def test_deterministic(self):
        seed = b"\x42" * 32
        assert tee.create_platform(seed) == tee.create_platform(seed)

    def test_distinct_seeds_distinct_keys(self):
        a = tee.create_platform(b"\x01" * 32)
        b = tee.create_platform(b"\x02" * 32)
        assert a.platform_key != b.platform_key
        assert a.platform_id != b.platform_id

    def test_zero_seed_matches_keyed_digest_oracle(self):
        p = tee.create_platform(bytes(32))
        assert p.platform_key == oracles.hmac_sha256(bytes(32), b"SVPLATFORMv1/key")
        assert p.cpu_svn == oracles.hmac_sha256(bytes(32), b"SVPLATFORMv1/cpu-svn")[:16]
        assert p.platform_id == oracles.hmac_sha256(bytes(32), b"SVPLATFORMv1/id")[:16]
        assert p.platform_key != bytes(32)

    def test_field_sizes(self, platform):
        assert len(platform.platform_key) == 32
        assert len(platform.cpu_svn) == 16
        assert len(platform.platform_id) == 16

    def test_rejects_wrong_seed_size(self):
        with pytest.raises(ValueError):
            tee.create_platform(b"short")

    def test_repr_hides_root_secret(self, platform):
        assert platform.platform_key.hex() not in repr(platform)


class TestMeasureEnclave:
    def test_same_blob_equal_measurement(self):
        a = tee.measure_enclave(b"code", b"sig", 1, 1)
        b = tee.measure_enclave(b"code", b"sig", 1, 1)
        assert a.measurement == b.measurement
        assert a == b

    def test_bit_flip_changes_measurement(self):
        base = tee.measure_enclave(b"code", b"sig", 1, 1)
        flipped = tee.measure_enclave(b"codf", b"sig", 1, 1)
        assert base.measurement != flipped.measurement

    def test_empty_blob_measurement_is_empty_digest(self):
        e = tee.measure_enclave(b"", b"", 0, 0)
        assert e.measurement == SHA256_EMPTY
        assert e.signer == SHA256_EMPTY


class TestDeriveSealingKey:
    def test_deterministic(self, platform, enclave):
        args = (platform, enclave, MRENCLAVE, b"\x05" * 32, 1, b"\x06" * 16)
        assert tee.derive_sealing_key(*args) == tee.derive_sealing_key(*args)
        assert len(tee.derive_sealing_key(*args)) == 16

    def test_mrsigner_excludes_measurement(self, platform):
        a = tee.measure_enclave(b"build one", b"same signer", 9, 2)
        b = tee.measure_enclave(b"build two", b"same signer", 9, 2)
        assert a.measurement != b.measurement
        key_id = b"\x07" * 32
        ka = tee.derive_sealing_key(platform, a, MRSIGNER, key_id, 1, platform.cpu_svn)
        kb = tee.derive_sealing_key(platform, b, MRSIGNER, key_id, 1, platform.cpu_svn)
        assert ka == kb
        # but MRENCLAVE keys differ
        ea = tee.derive_sealing_key(platform, a, MRENCLAVE, key_id, 1, platform.cpu_svn)
        eb = tee.derive_sealing_key(platform, b, MRENCLAVE, key_id, 1, platform.cpu_svn)
        assert ea != eb

    def test_fixed_vector_against_cmac_oracle(self):
        platform = tee.create_platform(bytes(32))
        enclave = tee.measure_enclave(b"", b"", 0, 0)
        key = tee.derive_sealing_key(platform, enclave, MRENCLAVE, bytes(32), 0, bytes(16))
        message = (
            b"SEALKEYv1"
            + struct.pack("<H", 1)
            + bytes(32)
            + struct.pack("<H", 0)
            + bytes(16)
            + SHA256_EMPTY
        )
        assert key == oracles.aes_cmac(platform.platform_key, message)

    def test_mrsigner_serialization_against_oracle(self, platform):
        enclave = tee.measure_enclave(b"blob", b"owner", 513, 4)
        key_id = b"\x99" * 32
        key = tee.derive_sealing_key(platform, enclave, MRSIGNER, key_id, 2, b"\x01" * 16)
        message = (
            b"SEALKEYv1"
            + struct.pack("<H", 2)
            + key_id
            + struct.pack("<H", 2)
            + b"\x01" * 16
            + enclave.signer
            + struct.pack("<H", 513)
        )
        assert key == oracles.aes_cmac(platform.platform_key, message)

    def test_svn_gate(self, platform, enclave):
        with pytest.raises(SvnViolation):
            tee.derive_sealing_key(
                platform, enclave, MRENCLAVE, bytes(32), enclave.isv_svn + 1, bytes(16)
            )


class TestSealUnseal:
    def test_overhead_exact(self, platform, enclave):
        blob = tee.seal(platform, enclave, MRENCLAVE, b"\x00" * 32768, b"")
        assert len(blob.to_bytes()) == 33328

    def test_empty_payload_is_bare_header(self, platform, enclave):
        blob = tee.seal(platform, enclave, MRENCLAVE, b"", b"")
        assert len(blob.to_bytes()) == 560
        assert tee.unseal(platform, enclave, blob) == b""

    @given(st.integers(min_value=0, max_value=32768))
    @settings(max_examples=60, deadline=None)
    def test_size_law_property(self, size):
        platform = tee.create_platform(b"\x33" * 32)
        enclave = tee.measure_enclave(b"c", b"s", 1, 1)
        blob = tee.seal(platform, enclave, MRENCLAVE, bytes(size))
        assert len(blob.to_bytes()) == 560 + size

    def test_fresh_randomness(self, platform, enclave):
        a = tee.seal(platform, enclave, MRENCLAVE, b"same payload")
        b = tee.seal(platform, enclave, MRENCLAVE, b"same payload")
        assert a.key_id != b.key_id
        assert a.iv != b.iv
        assert a.ciphertext != b.ciphertext

    @pytest.mark.parametrize("size", [0, 1, 31, 32768, 32769, 10**6])
    def test_roundtrip_sizes(self, platform, enclave, size):
        rng = random.Random(size)
        payload = rng.randbytes(size)
        aad = rng.randbytes(rng.randrange(0, 64))
        blob = tee.seal(platform, enclave, MRENCLAVE, payload, aad)
        assert tee.unseal(platform, enclave, blob, aad) == payload
        # and through the wire format
        assert tee.unseal(platform, enclave, blob.to_bytes(), aad) == payload

    def test_roundtrip_random_cases_up_to_1mib(self, platform, enclave):
        rng = random.Random(7)
        for _ in range(8):
            payload = rng.randbytes(rng.randrange(0, 1 << 20))
            aad = rng.randbytes(8)
            blob = tee.seal(platform, enclave, MRSIGNER, payload, aad)
            assert tee.unseal(platform, enclave, blob, aad) == payload

    def test_wrong_platform_fails(self, platform, other_platform, enclave):
        blob = tee.seal(platform, enclave, MRENCLAVE, b"bound")
        with pytest.raises(AuthenticationFailure):
            tee.unseal(other_platform, enclave, blob)

    def test_wrong_aad_fails(self, platform, enclave):
        blob = tee.seal(platform, enclave, MRENCLAVE, b"x", b"right")
        with pytest.raises(AuthenticationFailure):
            tee.unseal(platform, enclave, blob, b"wrong")

    def test_policy_matrix(self, platform):
        sealer = tee.measure_enclave(b"one", b"team", 3, 1)
        sibling = tee.measure_enclave(b"two", b"team", 3, 1)  # same signer+product
        stranger = tee.measure_enclave(b"two", b"other team", 3, 1)
        by_code = tee.seal(platform, sealer, MRENCLAVE, b"secret")
        by_signer = tee.seal(platform, sealer, MRSIGNER, b"shared")
        # MRENCLAVE: only the identical measurement unseals
        assert tee.unseal(platform, sealer, by_code) == b"secret"
        with pytest.raises(AuthenticationFailure):
            tee.unseal(platform, sibling, by_code)
        # MRSIGNER: siblings unseal, strangers do not
        assert tee.unseal(platform, sibling, by_signer) == b"shared"
        with pytest.raises(AuthenticationFailure):
            tee.unseal(platform, stranger, by_signer)

    def test_mrsigner_product_id_separates(self, platform):
        sealer = tee.measure_enclave(b"one", b"team", 3, 1)
        other_product = tee.measure_enclave(b"one", b"team", 4, 1)
        blob = tee.seal(platform, sealer, MRSIGNER, b"p3 only")
        with pytest.raises(AuthenticationFailure):
            tee.unseal(platform, other_product, blob)

    def test_svn_monotonicity(self, platform):
        v1 = tee.measure_enclave(b"code", b"sig", 1, 1)
        v2 = tee.measure_enclave(b"code", b"sig", 1, 2)
        old_blob = tee.seal(platform, v1, MRENCLAVE, b"old data")
        assert tee.unseal(platform, v2, old_blob) == b"old data"
        new_blob = tee.seal(platform, v2, MRENCLAVE, b"new data")
        with pytest.raises(SvnViolation):
            tee.unseal(platform, v1, new_blob)

    def test_payload_too_large_guard(self, platform, enclave):
        class FakePayload(bytes):
            def __len__(self):
                return 2**32 - 560

        with pytest.raises(PayloadTooLarge):
            tee.seal(platform, enclave, MRENCLAVE, FakePayload())


class TestTamperDetection:
    def test_random_bit_flip_sweep(self, platform, enclave):
        payload = random.Random(99).randbytes(4096)
        blob = tee.seal(platform, enclave, MRENCLAVE, payload, b"aad").to_bytes()
        rng = random.Random(1234)
        positions = rng.sample(range(len(blob) * 8), 250)
        for bitpos in positions:
            tampered = bytearray(blob)
            tampered[bitpos // 8] ^= 1 << (bitpos % 8)
            with pytest.raises((AuthenticationFailure, MalformedBlob, SvnViolation)):
                tee.unseal(platform, enclave, bytes(tampered), b"aad")

    def test_every_header_field_flip_fails(self, platform, enclave):
        blob = tee.seal(platform, enclave, MRENCLAVE, b"field sweep", b"").to_bytes()
        # one flip inside each header region, reserved ranges included
        for offset in [0, 4, 8, 10, 12, 28, 60, 92, 124, 126, 128, 132, 136, 300,
                       531, 532, 544, 560]:
            tampered = bytearray(blob)
            tampered[offset] ^= 0x01
            with pytest.raises((AuthenticationFailure, MalformedBlob, SvnViolation)):
                tee.unseal(platform, enclave, bytes(tampered))

    def test_truncation_fails(self, platform, enclave):
        blob = tee.seal(platform, enclave, MRENCLAVE, b"0123456789").to_bytes()
        for cut in (1, 5, 10):
            with pytest.raises(MalformedBlob):
                tee.unseal(platform, enclave, blob[:-cut])
        with pytest.raises(MalformedBlob):
            tee.unseal(platform, enclave, blob[:100])


class TestBlobFormat:
    def test_parse_serialize_identity(self, platform, enclave):
        blob = tee.seal(platform, enclave, MRSIGNER, b"payload bytes", b"")
        raw = blob.to_bytes()
        assert tee.SealedBlob.from_bytes(raw).to_bytes() == raw

    def test_rejects_bad_magic(self, platform, enclave):
        raw = bytearray(tee.seal(platform, enclave, MRENCLAVE, b"x").to_bytes())
        raw[:4] = b"NOPE"
        with pytest.raises(MalformedBlob):
            tee.SealedBlob.from_bytes(bytes(raw))

    def test_rejects_bad_version(self, platform, enclave):
        raw = bytearray(tee.seal(platform, enclave, MRENCLAVE, b"x").to_bytes())
        raw[4] = 9
        with pytest.raises(MalformedBlob):
            tee.SealedBlob.from_bytes(bytes(raw))

    def test_rejects_unknown_policy(self, platform, enclave):
        raw = bytearray(tee.seal(platform, enclave, MRENCLAVE, b"x").to_bytes())
        raw[8] = 7
        with pytest.raises(MalformedBlob):
            tee.SealedBlob.from_bytes(bytes(raw))

    def test_rejects_nonzero_reserved(self, platform, enclave):
        raw = bytearray(tee.seal(platform, enclave, MRENCLAVE, b"x").to_bytes())
        raw[200] = 1
        with pytest.raises(MalformedBlob):
            tee.SealedBlob.from_bytes(bytes(raw))

    def test_rejects_size_mismatch(self, platform, enclave):
        raw = tee.seal(platform, enclave, MRENCLAVE, b"abc").to_bytes()
        with pytest.raises(MalformedBlob):
            tee.SealedBlob.from_bytes(raw + b"extra")

    def test_rejects_short_input(self):
        with pytest.raises(MalformedBlob):
            tee.SealedBlob.from_bytes(b"\x00" * 100)

    def test_key_secrecy(self, platform, enclave):
        for _ in range(5):
            blob = tee.seal(platform, enclave, MRENCLAVE, random.Random(3).randbytes(2048))
            raw = blob.to_bytes()
            assert platform.platform_key not in raw
            key = tee.derive_sealing_key(
                platform, enclave, blob.policy, blob.key_id, blob.isv_svn, blob.cpu_svn
            )
            assert key not in raw


class TestReports:
    def test_roundtrip(self, platform, enclave):
        target = tee.measure_enclave(b"verifier", b"sig", 2, 1)
        report = tee.create_report(platform, enclave, target, b"nonce" + bytes(59))
        assert tee.verify_report(platform, target, report)

    def test_wrong_platform_rejects(self, platform, other_platform, enclave):
        target = tee.measure_enclave(b"verifier", b"sig", 2, 1)
        report = tee.create_report(platform, enclave, target, bytes(64))
        assert not tee.verify_report(other_platform, target, report)

    def test_wrong_target_rejects(self, platform, enclave):
        target = tee.measure_enclave(b"verifier", b"sig", 2, 1)
        imposter = tee.measure_enclave(b"imposter", b"sig", 2, 1)
        report = tee.create_report(platform, enclave, target, bytes(64))
        assert not tee.verify_report(platform, imposter, report)

    def test_body_bit_flip_sweep(self, platform, enclave):
        target = tee.measure_enclave(b"verifier", b"sig", 2, 1)
        report = tee.create_report(platform, enclave, target, b"\xaa" * 64)
        body = bytearray(report.body_bytes())
        rng = random.Random(5)
        for _ in range(40):
            flipped = bytearray(body)
            bit = rng.randrange(len(body) * 8)
            flipped[bit // 8] ^= 1 << (bit % 8)
            m = flipped[:32]
            s = flipped[32:64]
            product_id, isv_svn = struct.unpack_from("<HH", flipped, 64)
            data = bytes(flipped[68:])
            forged = tee.Report(
                measurement=bytes(m), signer=bytes(s), product_id=product_id,
                isv_svn=isv_svn, report_data=data, mac=report.mac,
            )
            assert not tee.verify_report(platform, target, forged)

    def test_mac_matches_cmac_oracle(self, platform, enclave):
        target = tee.measure_enclave(b"verifier", b"sig", 2, 1)
        report = tee.create_report(platform, enclave, target, b"\x01" * 64)
        report_key = oracles.aes_cmac(
            platform.platform_key, b"REPORTv1" + target.measurement
        )
        assert report.mac == oracles.aes_cmac(report_key, report.body_bytes())

    def test_report_data_padded(self, platform, enclave):
        target = tee.measure_enclave(b"verifier", b"sig", 2, 1)
        report = tee.create_report(platform, enclave, target, b"short")
        assert len(report.report_data) == 64
        with pytest.raises(ValueError):
            tee.create_report(platform, enclave, target, bytes(65))
