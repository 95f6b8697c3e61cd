"""Smoke test for the flowdrift_py extension module."""

import json
import os
import tempfile

import flowdrift_py as fd


def main():
    assert fd.FEATURE_COUNT == 28 and len(fd.FEATURE_NAMES) == 28

    packets = [
        fd.Packet(0.000, "10.0.0.1", "10.0.0.2", 40000, 80, 6, 60, 0, tcp_flags=0x02),
        fd.Packet(0.010, "10.0.0.2", "10.0.0.1", 80, 40000, 6, 60, 0, tcp_flags=0x12),
        fd.Packet(0.020, "10.0.0.1", "10.0.0.2", 40000, 80, 6, 152, 100, tcp_flags=0x10),
    ]
    flows = fd.assemble(packets)
    assert len(flows) == 1
    f = flows[0].features()
    assert f[3] == 3 and f[6] == 272, f
    assert abs(f[20] - 0.010) < 1e-9 and abs(f[21] - 0.020) < 1e-9

    assert abs(fd.forgetting_rate(0.9721, 0.7835) - 0.1940) < 5e-5
    assert fd.auroc([0.9, 0.8, 0.4, 0.3], [1, 0, 1, 0]) == 0.75
    assert fd.auroc([0.1, 0.2], [1, 1]) is None
    assert fd.split_sizes(487_574) == (438_816, 48_758)
    assert fd.class_weights([0] * 80 + [1] * 20) == (0.625, 2.5)

    (xo, yo), (xi, yi) = fd.drift_pair(2000, 2000, seed=7)
    scale = lambda rows: [[v / 20.0 for v in r] for r in rows]
    xo, xi = scale(xo), scale(xi)
    m = fd.Model("logistic", eta=0.1)
    m.fit(xo, yo, epochs=5)
    acc = lambda model, x, y: fd.metrics(model.predict_many(x), y)["accuracy"]
    before = acc(m, xi, yi)
    for start in range(0, 2000, 500):
        m.partial_fit(xi[start:start + 500], yi[start:start + 500])
    after = acc(m, xi, yi)
    assert after > before, (before, after)

    mlp = fd.Model("mlp", hidden=[8], eta=0.05, seed=1)
    plain, lwf = mlp, mlp.with_lwf(lam=0.0)
    plain.partial_fit(xi[:200], yi[:200])
    lwf.partial_fit(xi[:200], yi[:200])
    assert plain.params() == lwf.params()

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "m.json")
        m.save(path)
        assert fd.Model.load(path) == m

        report = json.loads(fd.run_protocol(None, {
            "offline_source": write_pair(d),
            "incoming_source": os.path.join(d, "incoming.csv"),
            "output_dir": os.path.join(d, "out"),
            "batch_size": "500",
            "model": "perceptron",
        }))
        run = report["runs"][0]
        assert run["incoming_after"]["accuracy"] > run["incoming_before"]["accuracy"]
        assert os.path.exists(os.path.join(d, "out", "tables.txt"))

    try:
        fd.Model("forest")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown model kind accepted")
    print("smoke test ok")


def write_pair(d):
    (xo, yo), (xi, yi) = fd.drift_pair(3000, 3000, seed=3)
    names = fd.FEATURE_NAMES
    for name, x, y in (("offline.csv", xo, yo), ("incoming.csv", xi, yi)):
        with open(os.path.join(d, name), "w") as fh:
            fh.write(",".join([f"f{i + 1:02d}" for i in range(len(names))] + ["label"]) + "\n")
            for row, label in zip(x, y):
                fh.write(",".join(repr(v) for v in row) + f",{label}\n")
    return os.path.join(d, "offline.csv")


if __name__ == "__main__":
    main()
