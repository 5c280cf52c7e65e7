//! Grid-free reference renderers: every ray is tested against every segment.
#![allow(dead_code)]

use glam::DVec3;
use voxline_core::culling::Camera;
use voxline_core::raytracer::{ray_capsule, Ray, RenderSettings, Scene};

#[derive(Clone, Debug, PartialEq)]
pub struct BruteHit {
    pub segment: u32,
    /// Voxel-space distance.
    pub t: f64,
    pub color: DVec3,
}

/// Every hit of the ray, sorted by distance then segment id.
pub fn all_hits(ray: &Ray, scene: &Scene, settings: &RenderSettings) -> Vec<BruteHit> {
    let mut hits: Vec<BruteHit> = scene
        .segments
        .iter()
        .filter_map(|(id, c)| {
            ray_capsule(ray, c).map(|h| BruteHit {
                segment: id,
                t: h.t,
                color: scene.shade(settings, id, ray.at(h.t), h.normal),
            })
        })
        .collect();
    hits.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.segment.cmp(&b.segment)));
    hits
}

pub fn nearest_hit(ray: &Ray, scene: &Scene, settings: &RenderSettings) -> Option<BruteHit> {
    all_hits(ray, scene, settings).into_iter().next()
}

/// Exact front-to-back composite of every hit over the background.
pub fn composite(ray: &Ray, scene: &Scene, settings: &RenderSettings) -> DVec3 {
    let mut color = DVec3::ZERO;
    let mut acc = 0.0;
    for h in all_hits(ray, scene, settings) {
        color += (1.0 - acc) * settings.alpha * h.color;
        acc += (1.0 - acc) * settings.alpha;
    }
    color + (1.0 - acc) * settings.background
}

pub fn pixel_ray(scene: &Scene, cam: &Camera, x: u32, y: u32) -> Ray {
    Ray::primary(cam, x, y).to_voxel_space(&scene.grid)
}

/// Primary hit per pixel, row-major.
pub fn opaque_frame(scene: &Scene, cam: &Camera, settings: &RenderSettings) -> Vec<Option<BruteHit>> {
    (0..cam.height)
        .flat_map(|y| (0..cam.width).map(move |x| (x, y)))
        .map(|(x, y)| nearest_hit(&pixel_ray(scene, cam, x, y), scene, settings))
        .collect()
}

pub fn transparent_frame(scene: &Scene, cam: &Camera, settings: &RenderSettings) -> Vec<DVec3> {
    (0..cam.height)
        .flat_map(|y| (0..cam.width).map(move |x| (x, y)))
        .map(|(x, y)| composite(&pixel_ray(scene, cam, x, y), scene, settings))
        .collect()
}
