//! Runs the real ffmpeg binary. Set AHCLIP_FFMPEG when it is not on PATH.

use std::path::Path;

use ahclip_core::media::{FixtureAudio, MediaConfig, MediaError, MediaTools};
use ahclip_core::TimeInterval;

fn tools() -> MediaTools {
    MediaTools::discover(&MediaConfig::default()).expect("ffmpeg must be installed for media tests")
}

/// 16-bit PCM samples from a RIFF/WAVE file.
fn read_wav_samples(path: &Path) -> Vec<i16> {
    let bytes = std::fs::read(path).unwrap();
    assert_eq!(&bytes[0..4], b"RIFF");
    assert_eq!(&bytes[8..12], b"WAVE");
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let len = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body = pos + 8;
        if id == b"fmt " {
            let channels = u16::from_le_bytes([bytes[body + 2], bytes[body + 3]]);
            let rate = u32::from_le_bytes(bytes[body + 4..body + 8].try_into().unwrap());
            let bits = u16::from_le_bytes([bytes[body + 14], bytes[body + 15]]);
            assert_eq!((channels, rate, bits), (1, 16_000, 16));
        }
        if id == b"data" {
            let end = (body + len).min(bytes.len());
            return bytes[body..end]
                .chunks_exact(2)
                .map(|c| i16::from_le_bytes([c[0], c[1]]))
                .collect();
        }
        pos = body + len + (len & 1);
    }
    panic!("no data chunk in {}", path.display());
}

#[test]
fn fixture_probe_reports_duration_and_audio() {
    let t = tools();
    let dir = tempfile::tempdir().unwrap();
    let path = t
        .gen_fixture(10.0, FixtureAudio::from(true), &dir.path().join("ten.mp4"))
        .unwrap();
    let info = t.probe(&path).unwrap();
    assert!((9.9..=10.1).contains(&info.duration_s), "{info:?}");
    assert!(info.has_audio);
    assert!(info.has_video);
    assert_eq!((info.width, info.height), (160, 120));

    let short = t
        .gen_fixture(4.29, FixtureAudio::from(true), &dir.path().join("short.mp4"))
        .unwrap();
    let d = t.probe(&short).unwrap().duration_s;
    assert!((4.19..=4.39).contains(&d), "{d}");

    let mute = t
        .gen_fixture(3.0, FixtureAudio::None, &dir.path().join("mute.mp4"))
        .unwrap();
    assert!(!t.probe(&mute).unwrap().has_audio);
}

#[test]
fn fixture_rejects_bad_duration() {
    let t = tools();
    let dir = tempfile::tempdir().unwrap();
    for d in [0.0, -1.0, 61.0, f64::NAN] {
        assert!(matches!(
            t.gen_fixture(d, FixtureAudio::None, &dir.path().join("x.mp4")),
            Err(MediaError::Domain(_))
        ));
    }
}

#[test]
fn probe_errors() {
    let t = tools();
    assert!(matches!(
        t.probe(Path::new("/nonexistent/video.mp4")),
        Err(MediaError::Io { .. })
    ));
    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.mp4");
    std::fs::write(&junk, b"definitely not a video").unwrap();
    assert!(matches!(t.probe(&junk), Err(MediaError::Format { .. })));
}

#[test]
fn cut_windows() {
    let t = tools();
    let dir = tempfile::tempdir().unwrap();
    let src = t
        .gen_fixture(10.0, FixtureAudio::from(true), &dir.path().join("src.mp4"))
        .unwrap();

    let clip = t
        .cut(&src, TimeInterval::from_secs(3.0, 8.0).unwrap(), &dir.path().join("c/mid.mp4"))
        .unwrap();
    assert!((4.9..=5.1).contains(&clip.measured_duration_s), "{clip:?}");
    assert_eq!(clip.clip_id, "mid");
    assert!(t.probe(&clip.video_path).unwrap().has_audio);

    let err = t
        .cut(&src, TimeInterval::from_secs(8.0, 14.0).unwrap(), &dir.path().join("bad.mp4"))
        .unwrap_err();
    assert!(matches!(err, MediaError::Domain(_)), "{err}");
    assert!(!dir.path().join("bad.mp4").exists());

    let whole_len = t.probe(&src).unwrap().duration();
    let whole = t
        .cut(
            &src,
            TimeInterval::new(ahclip_core::Millis::ZERO, whole_len).unwrap(),
            &dir.path().join("whole.mp4"),
        )
        .unwrap();
    assert!((9.9..=10.1).contains(&whole.measured_duration_s));
}

#[test]
fn extract_audio_modalities() {
    let t = tools();
    let dir = tempfile::tempdir().unwrap();

    let tone = t
        .gen_fixture(4.0, FixtureAudio::Tone { frequency_hz: 440 }, &dir.path().join("tone.mp4"))
        .unwrap();
    let wav = t.extract_audio(&tone, &dir.path().join("tone.wav")).unwrap();
    let src_len = t.probe(&tone).unwrap().duration_s;
    let wav_len = t.probe(&wav).unwrap().duration_s;
    assert!((src_len - wav_len).abs() <= 0.1, "{src_len} vs {wav_len}");
    let samples = read_wav_samples(&wav);
    assert!(samples.iter().any(|s| s.unsigned_abs() > 1000));

    let silent = t
        .gen_fixture(2.0, FixtureAudio::Silent, &dir.path().join("silent.mp4"))
        .unwrap();
    let wav = t.extract_audio(&silent, &dir.path().join("silent.wav")).unwrap();
    let samples = read_wav_samples(&wav);
    assert!(!samples.is_empty());
    assert!(samples.iter().all(|s| s.unsigned_abs() <= 4));

    let mute = t
        .gen_fixture(2.0, FixtureAudio::None, &dir.path().join("mute.mp4"))
        .unwrap();
    assert!(matches!(
        t.extract_audio(&mute, &dir.path().join("mute.wav")),
        Err(MediaError::ModalityMissing { .. })
    ));
}

#[test]
fn cut_is_structurally_deterministic() {
    let t = tools();
    let dir = tempfile::tempdir().unwrap();
    let src = t
        .gen_fixture(6.0, FixtureAudio::from(true), &dir.path().join("src.mp4"))
        .unwrap();
    let w = TimeInterval::from_secs(1.25, 4.5).unwrap();
    let a = t.cut(&src, w, &dir.path().join("a.mp4")).unwrap();
    let b = t.cut(&src, w, &dir.path().join("b.mp4")).unwrap();
    assert_eq!(a.measured_duration_s, b.measured_duration_s);
}
