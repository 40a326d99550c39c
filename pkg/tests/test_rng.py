import numpy as np

from decsim.rng import CHUNK, Stream, StreamFamily, generator_for


def test_rows_are_order_independent():
    a = Stream(5, 2, "oracle", width=3, kind="normal")
    b = Stream(5, 2, "oracle", width=3, kind="normal")
    late = a.rows(CHUNK * 3 + 7, 40)
    early = a.rows(0, 10)
    assert np.array_equal(b.rows(0, 10), early)
    assert np.array_equal(b.rows(CHUNK * 3 + 7, 40), late)


def test_rows_span_chunks():
    s = Stream(1, 0, "oracle")
    whole = s.rows(CHUNK - 5, 10)
    parts = np.concatenate([s.rows(CHUNK - 5, 5), s.rows(CHUNK, 5)])
    assert np.array_equal(whole, parts)
    assert np.array_equal(s.row(CHUNK + 1), s.rows(CHUNK + 1, 1)[0])


def test_keys_separate_streams():
    base = Stream(1, 0, "oracle").rows(0, 50)
    assert not np.array_equal(base, Stream(2, 0, "oracle").rows(0, 50))
    assert not np.array_equal(base, Stream(1, 1, "oracle").rows(0, 50))
    assert not np.array_equal(base, Stream(1, 0, "compute").rows(0, 50))


def test_distribution_sanity():
    u = Stream(9, 0, "oracle").rows(0, 20000)
    z = Stream(9, 0, "oracle", kind="normal").rows(0, 20000)
    assert abs(u.mean() - 0.5) < 0.01
    assert abs(z.mean()) < 0.03 and abs(z.var() - 1) < 0.04


def test_family_and_sequential_access():
    fam = StreamFamily(4)
    s = fam.get(1, "level")
    assert fam.get(1, "level") is s
    vals = [s.next_value() for _ in range(3)]
    assert vals == list(Stream(4, 1, "level").rows(0, 3)[:, 0])
    g1, g2 = generator_for(4, 1, "level", 2), generator_for(4, 1, "level", 2)
    assert g1.random() == g2.random()
