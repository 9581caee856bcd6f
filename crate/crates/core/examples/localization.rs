//! Expands a small dataset under each localization strategy.

use differentia::localization::{
    dataset_stats, dataset_task_count, expand_dataset, ImageRecord, LocalizationStrategy,
    ObjectRegion,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let images = vec![
        ImageRecord::new("solo", 640, 480),
        ImageRecord::new("band", 800, 600)
            .with_region(ObjectRegion::new(
                "guitar",
                &[(10.0, 10.0), (200.0, 20.0), (150.0, 300.0)],
            ))
            .with_region(ObjectRegion::new(
                "flute",
                &[(400.0, 100.0), (700.0, 120.0), (690.0, 160.0)],
            )),
    ];
    println!("{:?}", dataset_stats(&images));
    for strategy in LocalizationStrategy::ALL {
        let tasks = expand_dataset(&images, strategy)?;
        assert_eq!(tasks.len(), dataset_task_count(&images, strategy));
        println!("\n{strategy:?}: {} task(s)", tasks.len());
        for t in tasks {
            println!("  {} crop={:?}", t.task_id, t.crop.map(|c| c.0));
        }
    }
    Ok(())
}
