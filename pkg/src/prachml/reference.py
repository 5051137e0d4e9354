"""Published curve values digitized for overlay; reference data, not fixtures.

Keys are SNR in dB (detection) or offset (multiplicity). Every table carries a
``source`` tag naming the published artifact it was read from.
"""

DETECTION = {
    "AWGN": {
        "source": "published missed-detection curves, AWGN channel",
        "curves": {
            "time_threshold": {-18: 9e-2, -16: 2.6e-2, -14: 6e-3, -12: 1.5e-3, -10: 3.5e-4, -8: 3e-5},
            "freq_threshold": {-18: 5e-2, -16: 1e-2, -14: 1.1e-3, -12: 3e-5},
            "lr": {-18: 0.1389, -17: 0.08085, -16: 0.0463375, -15: 0.026775, -14: 0.0157125,
                   -13: 0.0094375, -12: 0.0058},
            "nn": {-18: 0.00689, -17: 0.00216, -16: 0.00057, -15: 0.0001},
        },
    },
    "ETU70": {
        "source": "published missed-detection curves, ETU70 channel",
        "curves": {
            "best_threshold": {-18: 2.5e-2, -16: 2e-2, -14: 1.5e-2, -12: 6e-3},
            "lr": {-14: 0.0111, -12: 0.0054125},
            "nn": {-18: 0.0384875, -16: 0.0048375, -14: 0.00165, -12: 0.000675},
        },
    },
}

OFFSETS = {
    "AWGN": {
        "source": "published multiplicity offset probabilities, AWGN channel",
        "lr": {
            -20: [7.75625035e-01, 2.19635668e-01, 4.71188017e-03, 2.70697984e-05, 3.47048698e-07],
            -16: [7.88048337e-01, 2.08432242e-01, 3.51872675e-03, 6.94097396e-07],
        },
        "nn": {
            -20: [9.53699306e-01, 4.62812500e-02, 1.94444444e-05],
            -16: [9.76462153e-01, 2.35371528e-02, 6.94444444e-07],
        },
    },
    "ETU70": {
        "source": "published multiplicity offset probabilities, ETU70 channel",
        "lr": {
            -20: [7.77978272e-01, 2.14346764e-01, 7.60628261e-03, 4.30125430e-05, 2.56687757e-05],
            -16: [8.21640859e-01, 1.74276418e-01, 4.06607282e-03, 1.59562660e-05, 6.93750694e-07],
        },
        "nn": {
            -20: [9.00778472e-01, 9.82500000e-02, 9.65972222e-04, 4.86111111e-06, 6.94444444e-07],
            -16: [9.65905556e-01, 3.38659722e-02, 2.28472222e-04],
        },
    },
}

# row = true multiplicity, column = estimate; AWGN at -16 dB
CONFUSION = {
    "source": "published confusion matrices, AWGN channel, -16 dB",
    "snr_db": -16,
    "nn": [
        [0.996, 0.003, 0, 0, 0, 0],
        [0, 0.972, 0.027, 0, 0, 0],
        [0, 0.005, 0.987, 0.007, 0, 0],
        [0, 0, 0.013, 0.978, 0.007, 0],
        [0, 0, 0, 0.018, 0.971, 0.009],
        [0, 0, 0, 0, 0.033, 0.966],
    ],
    "lr": [
        [1, 0, 0, 0, 0, 0],
        [0.018, 0.735, 0.239, 0.007, 0, 0],
        [0, 0.048, 0.604, 0.334, 0.011, 0],
        [0, 0, 0.062, 0.659, 0.278, 0],
        [0, 0, 0, 0.086, 0.813, 0.099],
        [0, 0, 0, 0, 0.088, 0.912],
    ],
}


def detection_reference(channel: str, snr_db: float) -> dict:
    """Published missed-detection values at `snr_db` keyed by curve name (None when absent)."""
    table = DETECTION.get(channel.upper(), {"curves": {}})["curves"]
    key = int(round(snr_db)) if float(snr_db).is_integer() else snr_db
    return {name: pts.get(key) for name, pts in table.items()}


def offset_reference(channel: str, family: str, snr_db: float):
    table = OFFSETS.get(channel.upper(), {})
    return table.get(family, {}).get(int(round(snr_db)) if float(snr_db).is_integer() else snr_db)
