"""Wire protocol: handshake, framing, ordering, lifecycle, equivalence.

The test server lives inline as a stdlib-only script so these tests pin
the protocol itself, not any shared helper code.
"""

import sys
import threading
import time

import numpy as np
import pytest

from certsmooth.extproto import (
    ExternalClassifier,
    ProtocolError,
    decode_batch,
    encode_batch,
    spawn_external,
)
from certsmooth.smoothing import ClassifierError, NoiseSpec, certify
from certsmooth.toymodel import LinearArgmaxClassifier

# picks coordinate c for class c, plus a fixed bias: arithmetic is exact in
# both numpy and pure python, so labels agree bit for bit
SERVER = r"""
import base64, json, struct, sys, time

N_CLASSES = 3
BIAS = [0.125, -0.25, 0.0625]
mode = sys.argv[1] if len(sys.argv) > 1 else "ok"

def send(obj):
    sys.stdout.write(json.dumps(obj) + "\n")
    sys.stdout.flush()

def labels_for(frame):
    shape = frame["shape"]
    raw = base64.b64decode(frame["data_b64"])
    vals = struct.unpack("<%df" % (shape[0] * shape[1]), raw)
    out = []
    for i in range(shape[0]):
        row = vals[i * shape[1] : (i + 1) * shape[1]]
        scores = [row[c] + BIAS[c] for c in range(N_CLASSES)]
        best = 0
        for c in range(1, N_CLASSES):
            if scores[c] > scores[best]:
                best = c
        out.append(best)
    return out

held = []
for line in sys.stdin:
    frame = json.loads(line)
    kind = frame.get("kind")
    if kind == "hello":
        if mode == "slow_hello":
            time.sleep(30)
        if mode == "bad_version":
            send({"kind": "error", "id": None, "message": "unsupported version"})
            continue
        send({"kind": "hello_ok", "num_classes": N_CLASSES})
    elif kind == "infer":
        if mode == "garbage":
            sys.stdout.write("this is not json\n")
            sys.stdout.flush()
        elif mode == "error_frame":
            send({"kind": "error", "id": frame["id"], "message": "model exploded"})
        elif mode == "short_labels":
            send({"kind": "labels", "id": frame["id"], "labels": [0]})
        elif mode == "duplicate":
            send({"kind": "labels", "id": frame["id"], "labels": labels_for(frame)})
            send({"kind": "labels", "id": frame["id"], "labels": labels_for(frame)})
        elif mode == "reorder":
            held.append(frame)
            if len(held) == 2:
                for f in reversed(held):
                    send({"kind": "labels", "id": f["id"], "labels": labels_for(f)})
                held = []
        else:
            send({"kind": "labels", "id": frame["id"], "labels": labels_for(frame)})
    elif kind == "shutdown":
        sys.exit(0)
"""


@pytest.fixture(scope="module")
def server_script(tmp_path_factory):
    path = tmp_path_factory.mktemp("proto") / "server.py"
    path.write_text(SERVER)
    return path


def command(server_script, mode="ok"):
    return [sys.executable, str(server_script), mode]


def in_process_classifier():
    weights = np.eye(3, 4)
    bias = np.array([0.125, -0.25, 0.0625])
    return LinearArgmaxClassifier(weights, bias, float32_inputs=True)


class TestHandshake:
    def test_hello_ok(self, server_script):
        with spawn_external(command(server_script)) as clf:
            assert clf.num_classes == 3

    def test_handshake_timeout(self, server_script):
        with pytest.raises(ProtocolError, match="timed out"):
            ExternalClassifier(command(server_script, "slow_hello"), handshake_timeout=0.5)

    def test_version_rejection_is_hard_failure(self, server_script):
        with pytest.raises(ProtocolError, match="hello_ok"):
            spawn_external(command(server_script, "bad_version"))

    def test_missing_executable(self):
        with pytest.raises(ClassifierError, match="spawn"):
            spawn_external("/does/not/exist-anywhere")


class TestInference:
    def test_labels_match_in_process_model(self, server_script):
        rng = np.random.default_rng(0)
        batch = rng.uniform(-1, 1, size=(17, 4))
        with spawn_external(command(server_script)) as clf:
            remote = clf.evaluate(batch)
        local = in_process_classifier().evaluate(batch)
        assert np.array_equal(remote, local)

    def test_base64_round_trip_exact(self):
        rng = np.random.default_rng(3)
        batch = rng.standard_normal((5, 7)).astype(np.float32)
        shape, data = encode_batch(batch)
        assert np.array_equal(decode_batch(shape, data), batch)

    def test_malformed_line_names_byte_offset(self, server_script):
        with spawn_external(command(server_script, "garbage")) as clf:
            with pytest.raises(ProtocolError, match=r"byte offset \d+"):
                clf.evaluate(np.zeros((2, 4)))

    def test_error_frame_raises_with_message(self, server_script):
        with spawn_external(command(server_script, "error_frame")) as clf:
            with pytest.raises(ClassifierError, match="model exploded"):
                clf.evaluate(np.zeros((2, 4)))

    def test_wrong_label_count_rejected(self, server_script):
        with spawn_external(command(server_script, "short_labels")) as clf:
            with pytest.raises(ProtocolError, match="labels"):
                clf.evaluate(np.zeros((3, 4)))

    def test_duplicate_response_rejected(self, server_script):
        with spawn_external(command(server_script, "duplicate")) as clf:
            clf.evaluate(np.zeros((1, 4)))
            with pytest.raises(ProtocolError, match="duplicate|unsolicited"):
                clf.evaluate(np.zeros((1, 4)))

    def test_out_of_order_responses_matched_by_id(self, server_script):
        batch_a = np.zeros((2, 4))
        batch_b = np.ones((2, 4)) * 5.0
        expected_a = in_process_classifier().evaluate(batch_a)
        expected_b = in_process_classifier().evaluate(batch_b)
        with spawn_external(command(server_script, "reorder")) as clf:
            results = {}
            errors = []

            def worker(name, batch):
                try:
                    results[name] = clf.evaluate(batch)
                except Exception as exc:  # surface in the main thread
                    errors.append(exc)

            t1 = threading.Thread(target=worker, args=("a", batch_a))
            t2 = threading.Thread(target=worker, args=("b", batch_b))
            t1.start()
            time.sleep(0.15)  # ensure request ids are ordered a then b
            t2.start()
            t1.join(10)
            t2.join(10)
            assert not errors
            assert np.array_equal(results["a"], expected_a)
            assert np.array_equal(results["b"], expected_b)


class TestLifecycle:
    def test_shutdown_exits_zero_promptly(self, server_script):
        clf = spawn_external(command(server_script))
        started = time.monotonic()
        code = clf.shutdown()
        assert code == 0
        assert time.monotonic() - started < 5.0

    def test_evaluate_after_shutdown_rejected(self, server_script):
        clf = spawn_external(command(server_script))
        clf.shutdown()
        with pytest.raises(ClassifierError, match="shut down"):
            clf.evaluate(np.zeros((1, 4)))

    def test_child_crash_reports_stderr(self, server_script, tmp_path):
        crashy = tmp_path / "crash.py"
        crashy.write_text(
            "import sys, json\n"
            "line = sys.stdin.readline()\n"
            "print('about to die', file=sys.stderr)\n"
            "sys.exit(3)\n"
        )
        with pytest.raises((ClassifierError, ProtocolError), match="about to die"):
            spawn_external([sys.executable, str(crashy)])


class TestCertificationEquivalence:
    def test_bit_identical_to_in_process_classifier(self, server_script):
        local = in_process_classifier()
        rng = np.random.default_rng(42)
        points = rng.uniform(-1, 1, size=(6, 4))
        with spawn_external(command(server_script)) as remote:
            for index, x in enumerate(points):
                spec = NoiseSpec(sigma=0.5, n0=20, n=400, alpha=0.001, seed=900 + index)
                ours = certify(local, x, spec, batch_size=128)
                theirs = certify(remote, x, spec, batch_size=128)
                assert ours.label == theirs.label
                assert ours.radius == theirs.radius
                assert ours.pa_lower == theirs.pa_lower
                assert np.array_equal(ours.counts, theirs.counts)
