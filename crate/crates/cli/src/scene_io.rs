//! Scene and flow files in the tensor container.

use gma3d_core::flowmetrics::FlowField;
use gma3d_core::numkern::DenseArray;
use gma3d_core::spatial::PointCloud;
use gma3d_core::synthgen::SyntheticScene;
use gma3d_core::{Error, Result};

use crate::container::TensorContainer;

pub fn scene_to_container(s: &SyntheticScene) -> Result<TensorContainer> {
    let n = s.len();
    let mut c = TensorContainer::new();
    c.push("frame1", &s.frame1.to_array())?;
    c.push("frame2", &s.frame2.to_array())?;
    c.push("gt_flow", &s.gt_flow.to_array())?;
    let mask = s
        .occlusion_mask
        .iter()
        .map(|&o| if o { 1.0 } else { 0.0 })
        .collect();
    c.push_raw("occlusion_mask", vec![n], mask)?;
    let ids = s.cluster_id.iter().map(|&i| i as f32).collect();
    c.push_raw("cluster_id", vec![n], ids)?;
    c.push("context", &s.context)?;
    c.push("motion_in", &s.motion_in)?;
    Ok(c)
}

/// Inverse of [`scene_to_container`]; values come back widened from `f32`.
pub fn scene_from_container(c: &TensorContainer) -> Result<SyntheticScene> {
    let frame1 = PointCloud::from_array(&c.array("frame1")?)?;
    let frame2 = PointCloud::from_array(&c.array("frame2")?)?;
    let gt_flow = FlowField::from_array(&c.array("gt_flow")?)?;
    let n = frame1.len();
    let flags = |name: &str| -> Result<Vec<f32>> {
        let t = c
            .get(name)
            .ok_or_else(|| Error::Format(format!("container has no tensor '{name}'")))?;
        if t.dims != [n] {
            return Err(Error::Format(format!(
                "'{name}' has dims {:?}, expected [{n}]",
                t.dims
            )));
        }
        Ok(t.data.clone())
    };
    let occlusion_mask = flags("occlusion_mask")?
        .into_iter()
        .map(|v| match v {
            0.0 => Ok(false),
            1.0 => Ok(true),
            other => Err(Error::Format(format!(
                "occlusion_mask entry {other} is not 0 or 1"
            ))),
        })
        .collect::<Result<Vec<_>>>()?;
    let cluster_id = flags("cluster_id")?
        .into_iter()
        .map(|v| {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::Format(format!(
                    "cluster_id entry {v} is not a non-negative integer"
                )))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let context = c.array("context")?;
    let motion_in = c.array("motion_in")?;
    if gt_flow.len() != n || context.rows() != n || motion_in.rows() != n {
        return Err(Error::Format(
            "scene tensors disagree on the point count".into(),
        ));
    }
    Ok(SyntheticScene {
        frame1,
        frame2,
        gt_flow,
        occlusion_mask,
        cluster_id,
        context,
        motion_in,
    })
}

pub fn flow_to_container(flow: &FlowField<f64>) -> Result<TensorContainer> {
    let mut c = TensorContainer::new();
    c.push("flow", &flow.to_array())?;
    Ok(c)
}

pub fn flow_from_container(c: &TensorContainer) -> Result<FlowField<f64>> {
    let a: DenseArray<f64> = c.array("flow")?;
    FlowField::from_array(&a)
}
