import numpy as np
import pytest

from eegcast.edf import window_signals
from eegcast.synth import encode_edf, gen_coupled, gen_events, make_session, write_edf


def xcorr_peak(a, b, max_lag):
    """Lag maximizing sum a[n] * b[n - lag] (brute force)."""
    a = a - a.mean()
    b = b - b.mean()
    scores = [np.dot(a[lag:], b[: len(b) - lag]) / (len(b) - lag) for lag in range(max_lag + 1)]
    return int(np.argmax(scores))


def test_deterministic():
    a = gen_coupled(4, 500, 64, 3, 0.0, 9)
    b = gen_coupled(4, 500, 64, 3, 0.0, 9)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, gen_coupled(4, 500, 64, 3, 0.0, 10))


@pytest.mark.parametrize("lag", [1, 5, 8])
def test_cross_correlation_peaks_at_lag(lag):
    x = gen_coupled(3, 4000, 64, lag, 0.0, 1)
    for k in (1, 2):
        assert xcorr_peak(x[k], x[k - 1], 20) == lag
        np.testing.assert_allclose(x[k, lag:], x[k - 1, :-lag])


def test_single_channel_is_clean_mixture():
    x = gen_coupled(1, 256, 64, 4, 5.0, 3)
    y = gen_coupled(1, 256, 64, 4, 0.0, 3)
    assert x.shape == (1, 256)
    np.testing.assert_array_equal(x, y)


def test_adjacent_channels_more_related():
    x = gen_coupled(3, 8000, 64, 2, 5.0, 4)

    def best_corr(a, b):
        return max(abs(np.corrcoef(a[lag:], b[: len(b) - lag])[0, 1]) for lag in range(0, 10))

    assert best_corr(x[1], x[0]) > best_corr(x[2], x[0])


def test_events_identity_cases():
    x = gen_coupled(2, 2000, 64, 2, 1.0, 0)
    y, iv = gen_events(x, 0.0, 3.0, 1, rate=64)
    np.testing.assert_array_equal(x, y)
    assert iv == []
    y, iv = gen_events(x, 30.0, 1.0, 1, rate=64, spike_amplitude=0.0, duration=(1, 2))
    assert iv
    np.testing.assert_array_equal(x, y)


def test_events_change_signal_inside_intervals_only():
    x = gen_coupled(2, 6400, 64, 2, 1.0, 0)
    y, iv = gen_events(x, 6.0, 2.0, 5, rate=64, duration=(2, 4))
    inside = np.zeros(x.shape[1], bool)
    for a, b in iv:
        inside[a:b] = True
    assert inside.any()
    np.testing.assert_array_equal(y[:, ~inside], x[:, ~inside])
    assert not np.allclose(y[:, inside], x[:, inside])
    assert all(b1 < a2 for (_, b1), (a2, _) in zip(iv, iv[1:]))


def test_event_intervals_drive_window_labels():
    x = gen_coupled(2, 6400, 64, 2, 1.0, 0)
    y, iv = gen_events(x, 6.0, 2.0, 5, rate=64, duration=(2, 4))
    wins = window_signals(y, 128, 64, iv)
    for w in wins:
        s = int(w.start_time)
        expected = any(s < b and a < s + 128 for a, b in iv)
        assert w.label == int(expected)
    assert {w.label for w in wins} == {0, 1}


def test_write_rejects_empty_and_out_of_range(tmp_path):
    from eegcast.edf import RecordingSession

    with pytest.raises(ValueError):
        encode_edf(RecordingSession([]))
    with pytest.raises(ValueError):
        write_edf(make_session(np.full((1, 10), 1500.0), 10, ["A"]), tmp_path / "x.edf")
