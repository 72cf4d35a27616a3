"""Smoke test for the Python bindings: synthesize, train, predict, evaluate."""

import os
import tempfile

import twostage_glyph_py as tg


def main():
    assert tg.edit_distance([1, 2, 3], [1, 3]) == 1
    w = tg.fusion_weights([0.7333, 0.6810])
    assert abs(w[0] - 0.51849) < 1e-4 and abs(w[1] - 0.48151) < 1e-4

    net = tg.Mlp(24, 30, 49, seed=1)
    x = [i / 24 for i in range(24)]
    assert len(net.forward(x)) == 49
    assert net.gradient_check(x, 3) < 1e-4
    assert tg.Mlp.from_bytes(net.to_bytes()).forward(x) == net.forward(x)

    with tempfile.TemporaryDirectory() as tmp:
        data = os.path.join(tmp, "data")
        assert tg.synthesize(data, classes=3, per_class=9, noise=0.05, seed=3) == 27

        image = tg.GrayImage.read(os.path.join(data, "c01", "c01_0000.pgm"))
        assert (image.width, image.height) == (100, 100)
        assert len(tg.shadow_features(image)) == 24
        assert abs(sum(tg.chain_features(image)) - 1.0) < 1e-9
        corners, string = tg.corners(image)
        assert len(string) == 25 and sum(string) == len(corners)

        bundle = tg.train(data, epochs=40)
        path = os.path.join(tmp, "model.tsgb")
        bundle.save(path)
        result = tg.Bundle.load(path).predict(image)
        assert result["label"] == "c01", result
        assert result["decision"] in ("certain", "confused", "rejected")

        report = tg.evaluate(data, epochs=40)
        assert report["evaluated"] == 27
        print(f"{bundle!r}: prediction {result['label']} ({result['stage']}), "
              f"cross-validated accuracy {report['overall_accuracy']:.3f}")

        try:
            tg.GrayImage(2, 2, bytes([255] * 4)).write(os.path.join(tmp, "blank.pgm"))
            bundle.predict(tg.GrayImage.read(os.path.join(tmp, "blank.pgm")))
        except ValueError:
            pass
        else:
            raise AssertionError("blank image should be rejected")
    print("ok")


if __name__ == "__main__":
    main()
