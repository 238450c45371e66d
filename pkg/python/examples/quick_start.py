#!/usr/bin/env python3
"""
chirppose Quick Start Example

This demonstrates the basic Python API for chirppose.
"""

import numpy as np

import chirppose

print("=" * 60)
print("chirppose Quick Start Example")
print("=" * 60)
print()

# Display package info
chirppose.info()
print()

# ========== 1. Generate Poses ==========
print("[1] Generating a synthetic pose corpus...")
poses = chirppose.generate_poses(chirppose.SyntheticCorpusConfig(n_frames=60, seed=0))
print(f"   {len(poses)} poses, {poses[-1].t_ms} ms")
print()

# ========== 2. Encode Into Audio ==========
print("[2] Encoding poses into chirp frames...")
modem = chirppose.ModemConfig.from_preset(6)
encoder = chirppose.PoseEncoder()
payloads = [encoder.encode(p) for p in poses]
audio, starts = chirppose.build_stream(payloads, modem)
kinds = {t.name: sum(p.frame_type == t for p in payloads) for t in chirppose.FrameType}
print(f"   Frame types: {kinds}")
print(f"   Audio: {audio.duration:.2f} s at {audio.sample_rate} Hz")
print()

# ========== 3. Channel ==========
print("[3] Passing the audio through a 20 ms / 64 kbps codec...")
channel = chirppose.ChannelConfig(codec=chirppose.CodecSchedule.constant(20.0, 64.0))
received = chirppose.apply_channel(audio, channel)
frames = chirppose.decode_audio(received, modem)
print(f"   Frames recovered: {len(frames)} of {len(payloads)}")
print()

# ========== 4. Symbol Error Rate ==========
print("[4] Measuring SER on random symbols...")
value = chirppose.ser_test(modem, 2000, lambda a: chirppose.apply_channel(a, channel), seed=0)
print(f"   SER: {100 * value:.3f}%")
print()

# ========== 5. Renderer Models ==========
print("[5] Training a PCA detector and a small hand predictor...")
dataset = chirppose.PoseDataset(chirppose.generate_poses(
    chirppose.SyntheticCorpusConfig(n_frames=400, seed=1)))
detector = chirppose.fit_pca_detector(dataset.transmit_matrix(), 16)
pairs = {side: dataset.hand_pairs(side) for side in chirppose.Side}
predictor = chirppose.fit_predictor(
    pairs, chirppose.TrainConfig(epochs=5, batch_size=50, seed=0), hidden=(64,))
print(f"   Detector threshold: {detector.loss_threshold:.6f}")
x, _ = pairs[chirppose.Side.LEFT]
print(f"   Predicted hand shape: {predictor.predict(x[:1], chirppose.Side.LEFT).reshape(21, 2).shape}")
print()

# ========== 6. End-to-End Pipeline ==========
print("[6] Running the full pipeline...")
cfg = chirppose.PipelineConfig(rate_kbps=6, channel=channel)
report = chirppose.run_pipeline(cfg, poses, detector=detector, predictor=predictor)
print("   " + report.summary().replace("\n", "\n   "))
print()

# ========== 7. Render ==========
print("[7] Rendering one skeleton...")
frame = chirppose.reconstruct(chirppose.select_keypoints(poses[0]), detector, predictor)
image = chirppose.render_skeleton(frame, (640, 360))
print(f"   Image: {image.shape}, {int(np.count_nonzero(image.any(axis=2)))} drawn pixels")
print()

print("=" * 60)
print("Quick start complete!")
print("=" * 60)
