"""Package import and top-level exports"""
import chirppose


def test_import():
    """The package imports and reports a version"""
    assert chirppose.__version__


def test_public_names_resolve():
    for name in chirppose.__all__:
        assert hasattr(chirppose, name), name


def test_quick_round_trip():
    """A few synthetic poses survive the identity channel"""
    poses = chirppose.generate_poses(chirppose.SyntheticCorpusConfig(n_frames=3))
    cfg = chirppose.PipelineConfig(rate_kbps=6, channel=chirppose.ChannelConfig.identity())
    report = chirppose.run_pipeline(cfg, poses)
    assert report.frames_received == 3


def test_info(capsys):
    chirppose.info()
    out = capsys.readouterr().out
    assert out.startswith("chirppose version")
    assert "6 kbps preset" in out
