use super::Frame;
use crate::nn::Tensor;

/// Rec.601 luma in gray levels.
pub fn luma(rgb: [u8; 3]) -> f32 {
    0.299 * rgb[0] as f32 + 0.587 * rgb[1] as f32 + 0.114 * rgb[2] as f32
}

/// Grayscale, bilinear resize when the size differs, scale to `[0, 1]`.
/// The result has shape `[1, target_h, target_w]`.
pub fn to_model_input(frame: &Frame, target_h: usize, target_w: usize) -> Tensor<f32> {
    let mut out = vec![0f32; target_h * target_w];
    write_model_input(frame, target_h, target_w, &mut out);
    Tensor::from_vec(&[1, target_h, target_w], out).expect("sizes agree")
}

/// Same as [`to_model_input`] into a caller-provided slice of length `target_h * target_w`.
pub fn write_model_input(frame: &Frame, target_h: usize, target_w: usize, out: &mut [f32]) {
    assert_eq!(out.len(), target_h * target_w, "output slice length");
    let (w, h) = (frame.width(), frame.height());
    let data = frame.data();
    let gray = |x: usize, y: usize| {
        let i = (y * w + x) * 3;
        luma([data[i], data[i + 1], data[i + 2]])
    };
    if w == target_w && h == target_h {
        for (i, v) in out.iter_mut().enumerate() {
            *v = (gray(i % w, i / w) / 255.0).clamp(0.0, 1.0);
        }
        return;
    }
    let sx = w as f32 / target_w as f32;
    let sy = h as f32 / target_h as f32;
    for r in 0..target_h {
        let fy = ((r as f32 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f32);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let ty = fy - y0 as f32;
        for c in 0..target_w {
            let fx = ((c as f32 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f32);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let tx = fx - x0 as f32;
            let top = gray(x0, y0) * (1.0 - tx) + gray(x1, y0) * tx;
            let bottom = gray(x0, y1) * (1.0 - tx) + gray(x1, y1) * tx;
            out[r * target_w + c] = ((top * (1.0 - ty) + bottom * ty) / 255.0).clamp(0.0, 1.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn solid_frames() {
        let black = to_model_input(&Frame::filled(8, 6, [0, 0, 0]), 6, 8);
        assert!(black.data().iter().all(|&v| v == 0.0));
        let white = to_model_input(&Frame::filled(8, 6, [255, 255, 255]), 3, 4);
        assert!(white.data().iter().all(|&v| (v - 1.0).abs() < 1e-6));
        let red = to_model_input(&Frame::filled(8, 6, [255, 0, 0]), 6, 8);
        assert!(red.data().iter().all(|&v| (v - 0.299).abs() < 1.0 / 255.0));
        assert_eq!(red.shape(), &[1, 6, 8]);
    }

    #[test]
    fn resize_keeps_gradient_direction() {
        let mut f = Frame::filled(16, 4, [0, 0, 0]);
        for x in 0..16 {
            for y in 0..4 {
                let v = (x * 16) as u8;
                f.set_pixel(x, y, [v, v, v]);
            }
        }
        let t = to_model_input(&f, 2, 8);
        let row = &t.data()[..8];
        assert!(row.windows(2).all(|p| p[1] > p[0]));
    }

    proptest! {
        #[test]
        fn output_in_unit_range(pixels in proptest::collection::vec(any::<u8>(), 5 * 7 * 3), th in 1usize..10, tw in 1usize..10) {
            let f = Frame::new(7, 5, pixels).unwrap();
            let t = to_model_input(&f, th, tw);
            prop_assert!(t.data().iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
        }
    }
}
