//! Top-down raster of a scene at 5 mm per pixel, row 0 at the far edge.

use std::io::Cursor;

use image::{ImageFormat, Rgb, RgbImage};

use super::scene::{BBox, Scene, TABLE_DEPTH, TABLE_WIDTH};

pub const MM_PER_PIXEL: f64 = 5.0;
const BACKGROUND: Rgb<u8> = Rgb([235, 225, 205]);

fn pixel_span(b: &BBox, width: u32, height: u32) -> (u32, u32, u32, u32) {
    let px = |v: f64, max: u32| ((v / MM_PER_PIXEL).round().max(0.0) as u32).min(max);
    let (x0, x1) = (px(b.x0, width), px(b.x1, width));
    // flip y so larger y is nearer the top of the image
    let (r0, r1) = (px(TABLE_DEPTH - b.y1, height), px(TABLE_DEPTH - b.y0, height));
    (x0, x1, r0, r1)
}

pub fn render(scene: &Scene) -> RgbImage {
    let width = (TABLE_WIDTH / MM_PER_PIXEL) as u32;
    let height = (TABLE_DEPTH / MM_PER_PIXEL) as u32;
    let mut img = RgbImage::from_pixel(width, height, BACKGROUND);
    // receptacles first so their contents draw on top
    let mut order: Vec<_> = scene.objects.iter().collect();
    order.sort_by_key(|o| !o.receptacle);
    for o in order {
        let color = Rgb(o.color.rgb());
        let (x0, x1, r0, r1) = pixel_span(&o.bbox, width, height);
        for y in r0..r1 {
            for x in x0..x1 {
                let edge = x == x0 || x + 1 == x1 || y == r0 || y + 1 == r1;
                if !o.receptacle || edge || (x + y) % 4 == 0 {
                    img.put_pixel(x, y, color);
                }
            }
        }
    }
    img
}

pub fn render_png(scene: &Scene) -> Vec<u8> {
    let mut out = Cursor::new(Vec::new());
    render(scene)
        .write_to(&mut out, ImageFormat::Png)
        .expect("png encoding to memory");
    out.into_inner()
}
