import threading

import pytest

from pakemail.manager import (
    AttemptPolicy,
    AuthResult,
    Keystore,
    LockedOutError,
    ManagerError,
    NoChainError,
    Outcome,
    SessionManager,
    assign_role,
)
from pakemail.pake import Role
from pakemail.transport import LoopbackTransport, TransportEnvelope

IDA, IDB = b"a@x", b"b@x"


def make_pair(tmp_path, toy, backend=None, policy=None):
    backend = backend if backend is not None else LoopbackTransport()
    ka = Keystore(tmp_path / "a.ks", IDA)
    kb = Keystore(tmp_path / "b.ks", IDB)
    ma = SessionManager(ka, backend, toy, policy)
    mb = SessionManager(kb, backend, toy, policy)
    return ma, mb


def run_both(ma, mb, pw_a, pw_b, timeout=5.0, **kw):
    results = {}

    def side(name, mgr, pw):
        results[name] = mgr.authenticate(
            mgr.keystore.self_identity == IDA and IDB or IDA, pw,
            timeout=timeout, **kw)

    ta = threading.Thread(target=side, args=("a", ma, pw_a))
    tb = threading.Thread(target=side, args=("b", mb, pw_b))
    ta.start(); tb.start(); ta.join(); tb.join()
    return results["a"], results["b"]


def test_assign_role_tiebreak():
    assert assign_role(IDA, IDB) is Role.INITIATOR
    assert assign_role(IDB, IDA) is Role.RESPONDER


# ---------------------------------------------------------------------------
# Keystore
# ---------------------------------------------------------------------------

def test_keystore_new_and_reload(tmp_path):
    path = tmp_path / "s.ks"
    ks = Keystore(path, IDA)
    assert ks.self_identity == IDA
    fpr = ks.self_fingerprint
    reloaded = Keystore(path)
    assert reloaded.self_identity == IDA
    assert reloaded.self_fingerprint == fpr


def test_keystore_identity_checks(tmp_path):
    path = tmp_path / "s.ks"
    with pytest.raises(ManagerError):
        Keystore(path)  # new store without identity
    Keystore(path, IDA)
    with pytest.raises(ManagerError):
        Keystore(path, IDB)  # belongs to someone else


def test_keystore_rejects_foreign_file(tmp_path):
    path = tmp_path / "s.ks"
    path.write_text("not a keystore\n")
    with pytest.raises(ManagerError):
        Keystore(path)


def test_keystore_peer_state_roundtrip(tmp_path):
    path = tmp_path / "s.ks"
    ks = Keystore(path, IDA)
    rec = ks.peer(IDB)
    rec.authenticated = True
    rec.chained_key = bytes(range(32))
    rec.failed_attempts = 2
    ks.save()
    back = Keystore(path).peer(IDB)
    assert back.authenticated is True
    assert back.chained_key == bytes(range(32))
    assert back.failed_attempts == 2


# ---------------------------------------------------------------------------
# Authentication
# ---------------------------------------------------------------------------

def test_successful_auth_both_sides(tmp_path, toy):
    ma, mb = make_pair(tmp_path, toy)
    ra, rb = run_both(ma, mb, b"pw", b"pw")
    assert ra.outcome is Outcome.SUCCESS and rb.outcome is Outcome.SUCCESS
    assert ra.key == rb.key is not None
    assert ra.exchange_id == rb.exchange_id
    assert ma.keystore.peer(IDB).authenticated
    assert ma.keystore.peer(IDB).fingerprint == mb.keystore.self_fingerprint
    assert [e.outcome for e in ma.keystore.exchanges] == [Outcome.SUCCESS]


def test_mismatch_counts_attempt_and_withholds_key(tmp_path, toy):
    ma, mb = make_pair(tmp_path, toy)
    ra, rb = run_both(ma, mb, b"pw-right", b"pw-wrong")
    assert ra.outcome is Outcome.PASSWORD_MISMATCH
    assert rb.outcome is Outcome.PASSWORD_MISMATCH
    assert ra.key is None and rb.key is None
    assert ma.keystore.peer(IDB).failed_attempts == 1
    assert not ma.keystore.peer(IDB).authenticated


def test_lockout_and_operator_reset(tmp_path, toy):
    policy = AttemptPolicy(max_failed_attempts=2, timeout=5.0)
    ma, mb = make_pair(tmp_path, toy, policy=policy)
    for _ in range(2):
        ra, _ = run_both(ma, mb, b"right", b"wrong")
        assert ra.outcome is Outcome.PASSWORD_MISMATCH
    with pytest.raises(LockedOutError):
        ma.authenticate(IDB, b"right", timeout=0.1)
    ma.keystore.reset_attempts(IDB)
    mb.keystore.reset_attempts(IDA)
    ra, rb = run_both(ma, mb, b"pw", b"pw")
    assert ra.outcome is Outcome.SUCCESS


def test_silent_peer_times_out_and_is_recorded(tmp_path, toy):
    ma, _ = make_pair(tmp_path, toy)
    result = ma.authenticate(IDB, b"pw", timeout=0.1)
    assert result.outcome is Outcome.ABORTED_BY_TIMEOUT
    assert result.key is None
    assert [e.outcome for e in ma.keystore.exchanges] == [Outcome.ABORTED_BY_TIMEOUT]
    # a timeout is not a password failure
    assert ma.keystore.peer(IDB).failed_attempts == 0


def test_duplicate_and_reordered_envelopes_tolerated(tmp_path, toy):
    class NoisyBackend(LoopbackTransport):
        def send(self, env):
            super().send(env)
            super().send(env)  # duplicate everything

        def poll(self, recipient):
            return list(reversed(super().poll(recipient)))  # reorder

    ma, mb = make_pair(tmp_path, toy, backend=NoisyBackend())
    ra, rb = run_both(ma, mb, b"pw", b"pw")
    assert ra.outcome is Outcome.SUCCESS and rb.outcome is Outcome.SUCCESS
    assert ra.key == rb.key


def test_garbage_pake_payload_is_protocol_error(tmp_path, toy):
    backend = LoopbackTransport()
    ma, mb = make_pair(tmp_path, toy, backend=backend)

    t = threading.Thread(target=lambda: mb.authenticate(IDA, b"pw", timeout=1.0))
    t.start()
    # forge an opening flow with an undecodable group element
    backend.send(TransportEnvelope(
        exchange_id=bytes(16), flow=0, sender=IDA, recipient=IDB,
        payload=b"\x07", fingerprint=ma.keystore.self_fingerprint))
    t.join()
    assert [e.outcome for e in mb.keystore.exchanges] == [Outcome.PROTOCOL_ERROR]


def test_replayed_transcript_cannot_succeed(tmp_path, toy):
    # a MITM replaying a recorded successful exchange at the responder
    backend = LoopbackTransport()
    ma, mb = make_pair(tmp_path, toy, backend=backend)

    captured = []
    original_send = backend.send

    def tap(env):
        captured.append(env)
        original_send(env)

    backend.send = tap
    ra, rb = run_both(ma, mb, b"pw", b"pw")
    assert ra.outcome is Outcome.SUCCESS

    # replay everything the initiator sent, against a fresh responder run
    backend.send = original_send
    result_box = {}
    t = threading.Thread(target=lambda: result_box.update(
        r=mb.authenticate(IDA, b"pw", timeout=1.0)))
    t.start()
    for env in captured:
        if env.sender == IDA:
            backend.send(env)
    t.join()
    # the replayed tag binds the old transcript, never the fresh one
    assert result_box["r"].outcome is not Outcome.SUCCESS
    assert result_box["r"].key is None


def test_password_never_written_anywhere(tmp_path, toy):
    backend = LoopbackTransport()
    ma, mb = make_pair(tmp_path, toy, backend=backend)
    secret = b"hunter2-super-secret"

    captured = []
    original_send = backend.send
    backend.send = lambda env: (captured.append(env), original_send(env))
    ra, rb = run_both(ma, mb, secret, secret)
    assert ra.outcome is Outcome.SUCCESS
    for env in captured:
        assert secret not in env.to_bytes()
    for store in (tmp_path / "a.ks", tmp_path / "b.ks"):
        blob = store.read_bytes()
        assert secret not in blob
        assert secret.hex().encode() not in blob


# ---------------------------------------------------------------------------
# Chaining and sealed data
# ---------------------------------------------------------------------------

def test_chained_reauth_rotates_key(tmp_path, toy):
    ma, mb = make_pair(tmp_path, toy)
    ra, rb = run_both(ma, mb, b"pw", b"pw")
    first = ra.key

    results = {}
    ta = threading.Thread(target=lambda: results.update(
        a=ma.reauthenticate_chained(IDB, timeout=5.0)))
    tb = threading.Thread(target=lambda: results.update(
        b=mb.reauthenticate_chained(IDA, timeout=5.0)))
    ta.start(); tb.start(); ta.join(); tb.join()
    assert results["a"].outcome is Outcome.SUCCESS
    assert results["a"].key == results["b"].key
    assert results["a"].key != first
    assert ma.keystore.peer(IDB).chained_key == results["a"].key


def test_chained_reauth_requires_stored_key(tmp_path, toy):
    ma, _ = make_pair(tmp_path, toy)
    with pytest.raises(NoChainError):
        ma.reauthenticate_chained(IDB)


def test_diverged_chain_falls_back_to_manual(tmp_path, toy):
    ma, mb = make_pair(tmp_path, toy)
    run_both(ma, mb, b"pw", b"pw")
    mb.keystore.peer(IDA).chained_key = bytes(32)  # simulate divergence

    results = {}
    ta = threading.Thread(target=lambda: results.update(
        a=ma.reauthenticate_chained(IDB, timeout=5.0)))
    tb = threading.Thread(target=lambda: results.update(
        b=mb.reauthenticate_chained(IDA, timeout=5.0)))
    ta.start(); tb.start(); ta.join(); tb.join()
    assert results["a"].outcome is Outcome.PASSWORD_MISMATCH
    assert results["a"].fallback_to_manual is True


def test_sealed_requires_authentication(tmp_path, toy):
    ma, _ = make_pair(tmp_path, toy)
    with pytest.raises(ManagerError):
        ma.send_sealed(IDB, b"hello")


def test_sealed_roundtrip_after_auth(tmp_path, toy):
    ma, mb = make_pair(tmp_path, toy)
    run_both(ma, mb, b"pw", b"pw")
    ma.send_sealed(IDB, b"attack at dawn")
    got = mb.recv_sealed(timeout=2.0)
    assert got == [(IDA, b"attack at dawn")]


def test_in_pi_binding_needs_known_fingerprint(tmp_path, toy):
    ma, _ = make_pair(tmp_path, toy)
    with pytest.raises(ManagerError):
        ma.authenticate(IDB, b"pw", binding="pi", timeout=0.1)


def test_in_pi_binding_succeeds_with_exchanged_fingerprints(tmp_path, toy):
    ma, mb = make_pair(tmp_path, toy)
    ma.keystore.peer(IDB).fingerprint = mb.keystore.self_fingerprint
    mb.keystore.peer(IDA).fingerprint = ma.keystore.self_fingerprint
    ra, rb = run_both(ma, mb, b"pw", b"pw", binding="pi")
    assert ra.outcome is Outcome.SUCCESS and rb.outcome is Outcome.SUCCESS
    assert ra.key == rb.key
