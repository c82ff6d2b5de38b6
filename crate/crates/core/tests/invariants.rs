mod common;

use common::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn blend_weights_form_a_partition_of_unity(case in blend_case()) {
        partition_of_unity(case)?;
    }

    #[test]
    fn coincident_points_take_their_anchor_exactly(case in anchor_case()) {
        coincident_point_takes_its_anchor(case)?;
    }

    #[test]
    fn icp_rms_never_increases_on_any_input(case in icp_case()) {
        icp_rms_never_increases(case)?;
    }

    #[test]
    fn pca_axes_follow_a_rigid_motion(case in pca_case()) {
        pca_is_rotation_equivariant(case)?;
    }

    #[test]
    fn flood_fill_stays_inside_the_mask(case in flood_case()) {
        flood_fill_respects_the_mask(case)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn template_graph_always_has_245_nodes(layout in valid_layout()) {
        template_graph_has_245_nodes(layout)?;
    }

    #[test]
    fn layouts_off_the_total_name_the_layout(case in off_total_case()) {
        layouts_off_the_total_are_rejected(case)?;
    }
}
